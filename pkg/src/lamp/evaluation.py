"""Evaluation harness: grid and node baselines, SR / SPL / GDist metrics,
memory accounting, timing, and the node-selection ablation.

All methods are evaluated on the same dataset and the same queries; they
differ only in how the map is represented and how the final pose is chosen.
"""

from __future__ import annotations

import io
import struct
import time
from dataclasses import dataclass

import numpy as np

from .field import FieldModel, save_model_bytes
from .geometry import Pose, normalize
from .graph import TopoGraph, _repair_connectivity, astar, build_graph, score_and_sample
from .planner import RefineConfig, nearest_node, refine, select_best_candidate
from .world import WorldSpec, goal_embedding

GRID_MAGIC = b"LAMPGRD1"
NODEMAP_MAGIC = b"LAMPNOD1"

EASY_RADIUS_THRESHOLD = 1.5  # meters; objects at least this big count as easy
MAX_GRID_CELLS = 50_000_000


class GridOverflowError(ValueError):
    pass


# -- baselines ---------------------------------------------------------------


@dataclass
class GridMapBaseline:
    """Top-down 2D grid of mean embeddings, one cell per cell_size square."""

    origin: np.ndarray  # (2,)
    cell_size: float
    nx: int
    ny: int
    means: np.ndarray  # (nx, ny, d); zero rows where empty/ambiguous
    counts: np.ndarray  # (nx, ny) u32
    ambiguous: np.ndarray  # (nx, ny) bool; zero-sum accumulations

    @property
    def d(self) -> int:
        return self.means.shape[2]

    def cell_center(self, ix: int, iy: int) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + (ix + 0.5) * self.cell_size,
                self.origin[1] + (iy + 0.5) * self.cell_size,
                0.0,
            ]
        )

    def occupied_cells(self) -> list[tuple[int, int]]:
        idx = np.argwhere((self.counts > 0) & ~self.ambiguous)
        return [tuple(map(int, ij)) for ij in idx]

    def serialize(self) -> bytes:
        buf = io.BytesIO()
        buf.write(GRID_MAGIC)
        buf.write(
            struct.pack(
                "<IffII I",
                1,
                float(self.origin[0]),
                float(self.origin[1]),
                self.nx,
                self.ny,
                self.d,
            )
        )
        buf.write(struct.pack("<f", self.cell_size))
        # dense layout: memory grows with the cell count, occupied or not
        buf.write(self.means.astype("<f4").tobytes())
        buf.write(self.counts.astype("<u4").tobytes())
        return buf.getvalue()


def build_grid_baseline(X: np.ndarray, Z: np.ndarray, extent: np.ndarray, cell_size: float) -> GridMapBaseline:
    """Accumulate embeddings into cells by position, renormalize the means.

    Cells whose accumulated sum is (numerically) zero are flagged ambiguous
    and excluded from similarity queries.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    extent = np.asarray(extent, dtype=float)
    nx = int(np.ceil((extent[0, 1] - extent[0, 0]) / cell_size))
    ny = int(np.ceil((extent[1, 1] - extent[1, 0]) / cell_size))
    nx, ny = max(nx, 1), max(ny, 1)
    if nx * ny > MAX_GRID_CELLS:
        raise GridOverflowError(f"{nx}x{ny} cells exceeds the {MAX_GRID_CELLS} cap")
    d = Z.shape[1]
    sums = np.zeros((nx, ny, d))
    counts = np.zeros((nx, ny), dtype=np.uint32)
    ix = np.clip(((X[:, 0] - extent[0, 0]) / cell_size).astype(int), 0, nx - 1)
    iy = np.clip(((X[:, 1] - extent[1, 0]) / cell_size).astype(int), 0, ny - 1)
    np.add.at(sums, (ix, iy), Z)
    np.add.at(counts, (ix, iy), 1)
    norms = np.linalg.norm(sums, axis=2)
    ambiguous = (counts > 0) & (norms < 1e-9)
    means = np.zeros_like(sums)
    ok = (counts > 0) & ~ambiguous
    means[ok] = sums[ok] / norms[ok][:, None]
    return GridMapBaseline(
        origin=extent[:, 0].copy(),
        cell_size=cell_size,
        nx=nx,
        ny=ny,
        means=means,
        counts=counts,
        ambiguous=ambiguous,
    )


@dataclass
class NodeMapBaseline:
    """Graph nodes that each explicitly store one observed embedding."""

    graph: TopoGraph
    embeddings: dict[int, np.ndarray]

    def serialize(self) -> bytes:
        buf = io.BytesIO()
        buf.write(NODEMAP_MAGIC)
        ids = sorted(self.graph.nodes)
        d = self.embeddings[ids[0]].shape[0] if ids else 0
        edges = self.graph.edge_list()
        buf.write(struct.pack("<IIII", 1, len(ids), len(edges), d))
        for i in ids:
            buf.write(self.graph.nodes[i].as_vector().astype("<f4").tobytes())
            buf.write(self.embeddings[i].astype("<f4").tobytes())
        for a, b in edges:
            buf.write(struct.pack("<II", a, b))
        return buf.getvalue()


def build_node_baseline(graph: TopoGraph, X: np.ndarray, Z: np.ndarray) -> NodeMapBaseline:
    """Each node stores the dataset embedding captured nearest to its pose."""
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    positions = X[:, :3]
    embeddings = {}
    for i in sorted(graph.nodes):
        j = int(np.argmin(np.linalg.norm(positions - graph.nodes[i].t, axis=1)))
        embeddings[i] = normalize(Z[j])
    return NodeMapBaseline(graph=graph, embeddings=embeddings)


def memory_footprint(artifact) -> int:
    """Exact serialized byte length of a map artifact."""
    if isinstance(artifact, FieldModel):
        return len(save_model_bytes(artifact))
    if isinstance(artifact, (GridMapBaseline, NodeMapBaseline)):
        return len(artifact.serialize())
    if isinstance(artifact, (bytes, bytearray)):
        return len(artifact)
    raise TypeError(f"cannot measure {type(artifact).__name__}")


def grid_cell_for_budget(extent: np.ndarray, d: int, budget_bytes: int) -> float:
    """Cell size whose dense serialization lands on the byte budget."""
    extent = np.asarray(extent, dtype=float)
    area = (extent[0, 1] - extent[0, 0]) * (extent[1, 1] - extent[1, 0])
    header = 8 + 24 + 4
    per_cell = 4 * d + 4
    n_cells = max(1.0, (budget_bytes - header) / per_cell)
    return float(np.sqrt(area / n_cells))


def node_count_for_budget(d: int, budget_bytes: int) -> int:
    """Node count whose serialization (plus typical edges) fits the budget."""
    header = 8 + 16
    per_node = (7 + d) * 4 + 4 * 8  # pose+embedding plus ~4 edges of 8 bytes
    return max(1, int((budget_bytes - header) / per_node))


def build_graph_with_node_budget(
    poses: np.ndarray, link_radius_factor: float, target_nodes: int
) -> TopoGraph:
    """Bisect the subsampling separation until the node count is close.

    link_radius is tied to the separation (factor x separation) so the
    graph stays connected at any density.
    """
    lo, hi = 1e-3, 1e4

    def count(sep):
        return build_graph(poses, link_radius=link_radius_factor * sep, min_separation=sep).n_nodes()

    for _ in range(40):
        mid = np.sqrt(lo * hi)
        n = count(mid)
        if abs(n - target_nodes) <= max(1, int(0.02 * target_nodes)):
            lo = hi = mid
            break
        if n > target_nodes:
            lo = mid
        else:
            hi = mid
    sep = np.sqrt(lo * hi)
    return build_graph(poses, link_radius=link_radius_factor * sep, min_separation=sep)


# -- query evaluation --------------------------------------------------------


@dataclass(frozen=True)
class Query:
    start: Pose
    object_id: str


def make_queries(world: WorldSpec, n: int, seed: int) -> list[Query]:
    """Seeded query mix cycling through all objects with random start poses.

    Starts are positions in the world, independent of any particular map's
    graph; each method maps them to its own nearest node.
    """
    rng = np.random.default_rng(seed)
    ext = world.extent
    objs = [o.id for o in world.objects]
    queries = []
    for i in range(n):
        t = np.array([rng.uniform(*ext[0]), rng.uniform(*ext[1]), 0.0])
        yaw = rng.uniform(0.0, 2.0 * np.pi)
        q = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
        queries.append(Query(start=Pose(t=t, q=q), object_id=objs[i % len(objs)]))
    return queries


class ImplicitMethod:
    """Field + pose-only graph; final pose comes from candidate sampling
    plus gradient refinement."""

    name = "implicit"

    def __init__(self, model: FieldModel, graph: TopoGraph, refine_cfg: RefineConfig,
                 clamp_box: np.ndarray | None = None, seed: int = 0):
        self.model = model
        self.graph = graph
        self.refine_cfg = refine_cfg
        self.clamp_box = clamp_box
        self.seed = seed
        self._artifact_bytes = len(save_model_bytes(model))

    def memory_bytes(self) -> int:
        return self._artifact_bytes

    def unit_similarities(self, z_goal) -> dict[int, float]:
        ids = sorted(self.graph.nodes)
        Mu, _ = self.model.forward_batch(
            np.array([self.graph.nodes[v].as_vector() for v in ids])
        )
        return dict(zip(ids, (Mu @ np.asarray(z_goal, dtype=float)).tolist()))

    def unit_node(self, unit_id: int) -> int:
        return unit_id

    def unit_position(self, unit_id: int) -> np.ndarray:
        return self.graph.nodes[unit_id].t

    def final_pose(self, unit_id: int, z_goal, query_index: int) -> Pose:
        x_c = self.graph.nodes[unit_id]
        rng = np.random.default_rng((self.seed, query_index))
        x_best = select_best_candidate(self.model, x_c, z_goal, self.refine_cfg, rng)
        pose, _, _ = refine(self.model, x_c, x_best, z_goal, self.refine_cfg, self.clamp_box)
        return pose


class GridMethod:
    name = "grid"

    def __init__(self, grid: GridMapBaseline, traversal_graph: TopoGraph):
        self.grid = grid
        self.graph = traversal_graph
        self._cells = grid.occupied_cells()

    def memory_bytes(self) -> int:
        return len(self.grid.serialize())

    def unit_similarities(self, z_goal) -> dict[int, float]:
        z = np.asarray(z_goal, dtype=float)
        out = {}
        for ix, iy in self._cells:
            out[ix * self.grid.ny + iy] = float(self.grid.means[ix, iy] @ z)
        return out

    def unit_position(self, unit_id: int) -> np.ndarray:
        return self.grid.cell_center(unit_id // self.grid.ny, unit_id % self.grid.ny)

    def unit_node(self, unit_id: int) -> int:
        p = self.unit_position(unit_id)
        pose = Pose(t=p, q=np.array([1.0, 0.0, 0.0, 0.0]))
        return nearest_node(self.graph, pose)

    def final_pose(self, unit_id: int, z_goal, query_index: int) -> Pose:
        return Pose(t=self.unit_position(unit_id), q=np.array([1.0, 0.0, 0.0, 0.0]))


class NodeMethod:
    name = "node"

    def __init__(self, node_map: NodeMapBaseline):
        self.node_map = node_map
        self.graph = node_map.graph

    def memory_bytes(self) -> int:
        return len(self.node_map.serialize())

    def unit_similarities(self, z_goal) -> dict[int, float]:
        z = np.asarray(z_goal, dtype=float)
        return {i: float(e @ z) for i, e in sorted(self.node_map.embeddings.items())}

    def unit_position(self, unit_id: int) -> np.ndarray:
        return self.graph.nodes[unit_id].t

    def unit_node(self, unit_id: int) -> int:
        return unit_id

    def final_pose(self, unit_id: int, z_goal, query_index: int) -> Pose:
        return self.graph.nodes[unit_id]


def _difficulty(world: WorldSpec, object_id: str) -> str:
    return "easy" if world.object_by_id(object_id).radius >= EASY_RADIUS_THRESHOLD else "hard"


def evaluate(
    method,
    world: WorldSpec,
    queries: list[Query],
    success_radius: float,
    top_fraction: float = 0.01,
) -> dict:
    """Run every query through a method and aggregate one report row.

    Success needs the final position within success_radius of the target
    AND the selected unit's similarity to rank inside the top fraction of
    all units (ties count against the rank, so a flat similarity field
    cannot succeed by luck).
    """
    if not queries:
        raise ValueError("queries must be nonempty")
    records = []
    t0 = time.perf_counter()
    for qi, q in enumerate(queries):
        target = world.object_by_id(q.object_id)
        z_goal = goal_embedding(world, q.object_id)
        sims = method.unit_similarities(z_goal)
        unit_ids = sorted(sims)
        values = np.array([sims[u] for u in unit_ids])
        best_i = int(np.argmax(values))
        chosen = unit_ids[best_i]
        rank = int(np.sum(values >= values[best_i]))
        top_k = max(1, int(np.ceil(top_fraction * len(unit_ids))))
        rank_ok = rank <= top_k

        start_node = nearest_node(method.graph, q.start)
        goal_node = method.unit_node(chosen)
        path, p_len = astar(method.graph, start_node, goal_node)
        if path is None:
            records.append(
                {"object_id": q.object_id, "difficulty": _difficulty(world, q.object_id),
                 "success": False, "spl": 0.0, "gdist": float("nan"),
                 "coarse_dist": float("nan"), "status": "no_path"}
            )
            continue
        final = method.final_pose(chosen, z_goal, qi)
        coarse_pos = method.unit_position(chosen)
        executed = p_len + float(np.linalg.norm(final.t - coarse_pos))
        gdist = float(np.linalg.norm(final.t - target.center))
        coarse_dist = float(np.linalg.norm(coarse_pos - target.center))
        success = rank_ok and gdist <= success_radius

        # shortest feasible path to the node nearest the target object
        obj_pose = Pose(t=target.center, q=np.array([1.0, 0.0, 0.0, 0.0]))
        obj_node = nearest_node(method.graph, obj_pose)
        _, ell = astar(method.graph, start_node, obj_node)
        if not np.isfinite(ell):
            ell = executed
        if success:
            spl = 1.0 if max(executed, ell) == 0 else ell / max(executed, ell)
        else:
            spl = 0.0
        records.append(
            {"object_id": q.object_id, "difficulty": _difficulty(world, q.object_id),
             "success": success, "spl": spl, "gdist": gdist,
             "coarse_dist": coarse_dist, "status": "ok"}
        )
    elapsed = time.perf_counter() - t0

    row = {"method": method.name,
           "memory_bytes": method.memory_bytes(),
           "mean_query_time_s": elapsed / len(queries)}
    for split in ("easy", "hard", "all"):
        recs = [r for r in records if split == "all" or r["difficulty"] == split]
        if not recs:
            row[f"sr_{split}"] = float("nan")
            row[f"spl_{split}"] = float("nan")
            row[f"gdist_{split}"] = float("nan")
            continue
        succ = [r for r in recs if r["success"]]
        row[f"sr_{split}"] = len(succ) / len(recs)
        row[f"spl_{split}"] = float(np.mean([r["spl"] for r in recs]))
        row[f"gdist_{split}"] = (
            float(np.mean([r["gdist"] for r in succ])) if succ else float("nan")
        )
    row["records"] = records
    return row


# -- node-selection ablation --------------------------------------------------


def _prune_rn(graph: TopoGraph, n_keep: int, rng) -> set[int]:
    ids = sorted(graph.nodes)
    return set(rng.choice(ids, size=n_keep, replace=False).tolist())


def _prune_rdn(graph: TopoGraph, n_keep: int, rng) -> set[int]:
    ids = sorted(graph.nodes, key=lambda v: (-graph.degree(v), v))
    return set(ids[:n_keep])


def _prune_rw(graph: TopoGraph, n_keep: int, rng, restart_p: float = 0.15) -> set[int]:
    ids = sorted(graph.nodes)
    cur = int(rng.choice(ids))
    visited = {cur}
    stall = 0
    while len(visited) < n_keep:
        nbrs = sorted(graph.adj[cur])
        if not nbrs or rng.uniform() < restart_p:
            cur = int(rng.choice(ids))
        else:
            cur = int(nbrs[int(rng.integers(len(nbrs)))])
        before = len(visited)
        visited.add(cur)
        stall = stall + 1 if len(visited) == before else 0
        if stall > 50 * len(ids):
            visited.add(int(rng.choice(ids)))
            stall = 0
    return visited


def _prune_ff(graph: TopoGraph, n_keep: int, rng, p_forward: float = 0.7) -> set[int]:
    ids = sorted(graph.nodes)
    burnt: set[int] = set()
    while len(burnt) < n_keep:
        frontier = [int(rng.choice(ids))]
        while frontier and len(burnt) < n_keep:
            v = frontier.pop()
            if v in burnt:
                continue
            burnt.add(v)
            for nbr in sorted(graph.adj[v]):
                if nbr not in burnt and rng.uniform() < p_forward:
                    frontier.append(nbr)
    return burnt


ABLATION_METHODS = (
    "RN", "RDN", "RW", "FF",
    "ours_vc", "ours_vc_u", "ours_vc_ss", "ours_full",
)

_OURS_WEIGHTS = {
    "ours_vc": (1.0, 0.0, 0.0),
    "ours_vc_u": (1.0, 1.0, 0.0),
    "ours_vc_ss": (1.0, 0.0, 0.5),
    "ours_full": (1.0, 1.0, 0.5),
}


def prune_graph(graph: TopoGraph, model: FieldModel, method: str,
                keep_fraction: float, seed: int = 0) -> TopoGraph:
    """Prune to keep_fraction with any ablation method, repair connectivity."""
    if method not in ABLATION_METHODS:
        raise ValueError(f"unknown node-selection method {method!r}")
    n_keep = int(np.ceil(keep_fraction * graph.n_nodes()))
    n_keep = min(n_keep, graph.n_nodes())
    if method in _OURS_WEIGHTS:
        sub, _ = score_and_sample(graph, model, _OURS_WEIGHTS[method], keep_fraction)
        return sub
    rng = np.random.default_rng(seed)
    retained = {
        "RN": _prune_rn,
        "RDN": _prune_rdn,
        "RW": _prune_rw,
        "FF": _prune_ff,
    }[method](graph, n_keep, rng)
    retained = _repair_connectivity(graph, retained)
    return graph.subgraph(retained)


def node_selection_ablation(
    graph: TopoGraph,
    model: FieldModel,
    world: WorldSpec,
    n_queries: int,
    keep_fraction: float,
    methods=ABLATION_METHODS,
    seeds=(0, 1, 2, 3, 4),
    success_radius: float = 5.0,
    top_fraction: float = 0.01,
    refine_cfg: RefineConfig | None = None,
    clamp_box: np.ndarray | None = None,
) -> list[dict]:
    """Evaluate the implicit method on graphs pruned by each strategy.

    Returns one row per method with mean and stddev over seeds for SR,
    SPL, and GDist (all-difficulty aggregate, matching the ablation table).
    """
    refine_cfg = refine_cfg or RefineConfig()
    rows = []
    for method_name in methods:
        srs, spls, gdists = [], [], []
        for seed in seeds:
            pruned = prune_graph(graph, model, method_name, keep_fraction, seed)
            queries = make_queries(world, n_queries, seed=seed + 1000)
            m = ImplicitMethod(model, pruned, refine_cfg, clamp_box, seed=seed)
            row = evaluate(m, world, queries, success_radius, top_fraction)
            srs.append(row["sr_all"])
            spls.append(row["spl_all"])
            if np.isfinite(row["gdist_all"]):
                gdists.append(row["gdist_all"])
        rows.append(
            {
                "method": method_name,
                "sr_mean": float(np.mean(srs)),
                "sr_std": float(np.std(srs)),
                "spl_mean": float(np.mean(spls)),
                "spl_std": float(np.std(spls)),
                "gdist_mean": float(np.mean(gdists)) if gdists else float("nan"),
                "gdist_std": float(np.std(gdists)) if gdists else float("nan"),
            }
        )
    return rows
