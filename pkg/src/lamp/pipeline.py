"""Pipeline stages shared by the CLI and the test harness.

Each stage reads its inputs from, and writes its outputs into, one run
directory. Stages are restartable: identical inputs produce identical
output bytes. Binary artifacts get a JSON sidecar with the seed tuple and
config hash; JSON artifacts embed the same metadata inline.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import evaluation, reporting
from .config import check_meta, run_meta, write_resolved_config, write_sidecar_meta
from .field import (
    FieldModel,
    PositionalEncodingSpec,
    TrainConfig,
    init_model,
    load_model,
    save_model,
    train,
)
from .geometry import Pose
from .graph import TopoGraph, build_graph, score_and_sample
from .planner import RefineConfig, inflated_box, plan
from .vmf import GammaPrior
from .world import (
    ObservationModel,
    WorldSpec,
    gen_dataset,
    gen_world,
    goal_embedding,
    load_dataset,
    save_dataset,
)

WORLD_FILE = "world.json"
DATASET_FILE = "dataset.bin"
MODEL_FILE = "model.bin"
HISTORY_FILE = "history.json"
GRAPH_FILE = "graph.json"
PRUNED_GRAPH_FILE = "graph_pruned.json"
SCORES_FILE = "scores.csv"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
GOLDEN_JSON = "golden.json"
ABLATION_JSON = "ablation.json"
ABLATION_CSV = "ablation.csv"


def observation_model(cfg: dict) -> ObservationModel:
    o = cfg["observation"]
    return ObservationModel(
        fov_half_angle=np.deg2rad(o["fov_half_angle_deg"]),
        max_range=o["max_range"],
        attenuation=o["attenuation"],
        noise_sigma=o["noise_sigma"],
    )


def refine_config(cfg: dict) -> RefineConfig:
    p = cfg["planner"]
    return RefineConfig(
        n_candidates=p["n_candidates"],
        sigma_pos=p["sigma_pos"],
        sigma_yaw=p["sigma_yaw"],
        lambda_dist=p["lambda_dist"],
        lr=p["lr"],
        beta1=p["beta1"],
        beta2=p["beta2"],
        eps=p["eps"],
        max_steps=p["max_steps"],
        tolerance=p["tolerance"],
    )


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["training"]
    return TrainConfig(
        lr=t["lr"],
        beta1=t["beta1"],
        beta2=t["beta2"],
        eps=t["eps"],
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        seed=cfg["seeds"]["train"],
        prior=GammaPrior(alpha=t["prior_alpha"], beta=t["prior_beta"]),
        weight_decay=t["weight_decay"],
        val_fraction=t["val_fraction"],
    )


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_world(out_dir) -> WorldSpec:
    data = json.loads((Path(out_dir) / WORLD_FILE).read_text())
    return WorldSpec.from_json(data["world"])


def stage_gen_world(cfg: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    w = cfg["world"]
    world = gen_world(
        seed=cfg["seeds"]["world"],
        extent=w["extent"],
        n_objects=w["n_objects"],
        d=w["d"],
        hard_fraction=w["hard_fraction"],
    )
    path = out_dir / WORLD_FILE
    _write_json(path, {"meta": run_meta(cfg, "gen-world"), "world": world.to_json()})
    return path


def stage_gen_data(cfg: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    world = load_world(out_dir)
    obs = observation_model(cfg)
    X, Z = gen_dataset(world, obs, cfg["data"]["n_samples"], cfg["seeds"]["data"])
    path = out_dir / DATASET_FILE
    save_dataset(X, Z, path)
    write_sidecar_meta(path, run_meta(cfg, "gen-data"))
    return path


def stage_train(cfg: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    world = load_world(out_dir)
    X, Z = load_dataset(out_dir / DATASET_FILE)
    t = cfg["training"]
    enc = PositionalEncodingSpec(
        L_pos=t["L_pos"], L_quat=t["L_quat"], include_identity=t["include_identity"]
    )
    model = init_model(
        encoding=enc,
        bounds=world.bounds3(),
        d=Z.shape[1],
        hidden=tuple(t["hidden"]),
        skip_layers=tuple(t["skip_layers"]),
        seed=cfg["seeds"]["train"],
    )
    model, history = train(model, X, Z, train_config(cfg))
    path = out_dir / MODEL_FILE
    save_model(model, path)
    write_sidecar_meta(path, run_meta(cfg, "train"))
    _write_json(out_dir / HISTORY_FILE, {"meta": run_meta(cfg, "train"), "history": history})
    reporting.render_loss_figure(history, out_dir)
    return path


def stage_build_graph(cfg: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    X, _ = load_dataset(out_dir / DATASET_FILE)
    g = cfg["graph"]
    graph = build_graph(X, link_radius=g["link_radius"], min_separation=g["min_separation"])
    path = out_dir / GRAPH_FILE
    _write_json(path, {"meta": run_meta(cfg, "build-graph"), "graph": graph.to_json()})
    return path


def load_graph(path) -> TopoGraph:
    data = json.loads(Path(path).read_text())
    return TopoGraph.from_json(data["graph"])


def stage_score_graph(cfg: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    graph = load_graph(out_dir / GRAPH_FILE)
    model = load_model(out_dir / MODEL_FILE)
    g = cfg["graph"]
    pruned, scores = score_and_sample(
        graph, model, weights=tuple(g["weights"]), keep_fraction=g["keep_fraction"]
    )
    path = out_dir / PRUNED_GRAPH_FILE
    _write_json(path, {"meta": run_meta(cfg, "score-graph"), "graph": pruned.to_json()})
    scores.write_csv(out_dir / SCORES_FILE)
    return path


def stage_plan(cfg: dict, out_dir, object_id: str, start=None) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    world = load_world(out_dir)
    model = load_model(out_dir / MODEL_FILE)
    graph_path = out_dir / PRUNED_GRAPH_FILE
    if not graph_path.exists():
        graph_path = out_dir / GRAPH_FILE
    graph = load_graph(graph_path)
    z_goal = goal_embedding(world, object_id)
    if start is None:
        first = sorted(graph.nodes)[0]
        x_init = graph.nodes[first]
    else:
        x_init = Pose(t=np.asarray(start[:3], dtype=float), q=np.asarray(start[3:], dtype=float))
    result = plan(
        model,
        graph,
        x_init,
        z_goal,
        refine_config(cfg),
        seed=cfg["seeds"]["eval"],
        clamp_box=inflated_box(world.bounds3()),
    )
    path = out_dir / f"plan_{object_id}.json"
    _write_json(path, {"meta": run_meta(cfg, "plan"), "plan": result.to_json()})
    return path


def build_eval_methods(cfg: dict, out_dir, force: bool = False):
    """Implicit method plus budget-matched grid and node baselines."""
    out_dir = Path(out_dir)
    world = load_world(out_dir)
    check_meta(out_dir / DATASET_FILE, cfg, force)
    check_meta(out_dir / MODEL_FILE, cfg, force)
    X, Z = load_dataset(out_dir / DATASET_FILE)
    model = load_model(out_dir / MODEL_FILE)
    graph_path = out_dir / PRUNED_GRAPH_FILE
    if not graph_path.exists():
        graph_path = out_dir / GRAPH_FILE
    graph = load_graph(graph_path)
    clamp = inflated_box(world.bounds3())
    implicit = evaluation.ImplicitMethod(
        model, graph, refine_config(cfg), clamp, seed=cfg["seeds"]["eval"]
    )
    budget = implicit.memory_bytes()
    cell = evaluation.grid_cell_for_budget(world.extent, world.d, budget)
    grid = evaluation.build_grid_baseline(X, Z, world.extent, cell)
    grid_method = evaluation.GridMethod(grid, graph)
    n_nodes = evaluation.node_count_for_budget(world.d, budget)
    node_graph = evaluation.build_graph_with_node_budget(X, 2.5, n_nodes)
    node_map = evaluation.build_node_baseline(node_graph, X, Z)
    node_method = evaluation.NodeMethod(node_map)
    return world, [implicit, grid_method, node_method]


def stage_eval(cfg: dict, out_dir, force: bool = False) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    world, methods = build_eval_methods(cfg, out_dir, force)
    e = cfg["eval"]
    queries = evaluation.make_queries(world, e["n_queries"], cfg["seeds"]["eval"])
    rows = [
        evaluation.evaluate(m, world, queries, e["success_radius"], e["top_fraction"])
        for m in methods
    ]
    meta = run_meta(cfg, "eval")
    reporting.write_report_json(rows, out_dir / REPORT_JSON, meta)
    reporting.write_report_csv(rows, out_dir / REPORT_CSV)
    reporting.render_report_figures(rows, out_dir)
    # timing-free twin of the report for byte-exact reproduction checks
    golden_rows = []
    for row in rows:
        golden_rows.append(
            {k: v for k, v in row.items() if k not in ("records", "mean_query_time_s")}
        )
    _write_json(out_dir / GOLDEN_JSON, {"meta": meta, "rows": golden_rows})
    return out_dir / REPORT_JSON


def stage_ablate(cfg: dict, out_dir, force: bool = False) -> Path:
    out_dir = Path(out_dir)
    write_resolved_config(cfg, out_dir)
    world = load_world(out_dir)
    check_meta(out_dir / MODEL_FILE, cfg, force)
    model = load_model(out_dir / MODEL_FILE)
    graph = load_graph(out_dir / GRAPH_FILE)
    e = cfg["eval"]
    rows = evaluation.node_selection_ablation(
        graph,
        model,
        world,
        n_queries=e["ablation_queries"],
        keep_fraction=e["keep_fraction"],
        seeds=tuple(e["ablation_seeds"]),
        success_radius=e["success_radius"],
        top_fraction=e["top_fraction"],
        refine_cfg=refine_config(cfg),
        clamp_box=inflated_box(world.bounds3()),
    )
    _write_json(out_dir / ABLATION_JSON, {"meta": run_meta(cfg, "ablate"), "rows": rows})
    reporting.write_report_csv(rows, out_dir / ABLATION_CSV, reporting.ABLATION_COLUMNS)
    reporting.render_ablation_figure(rows, out_dir)
    return out_dir / ABLATION_JSON
