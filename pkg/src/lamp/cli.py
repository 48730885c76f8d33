"""Command-line entry point: reproducible pipelines over one run directory.

    lamp gen-world --config run.yaml --out runs/demo
    lamp gen-data  --config run.yaml --out runs/demo
    lamp train     --config run.yaml --out runs/demo
    lamp build-graph / score-graph / plan / eval / ablate ...

All randomness flows from the seed tuple (world, data, train, eval); the
same config and seeds reproduce every artifact byte for byte.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import pipeline
from .config import ConfigError, load_config

OUT_ENV = "LAMP_OUT_ROOT"


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _resolve_out(out):
    if out is not None:
        return Path(out)
    root = os.environ.get(OUT_ENV) or None
    if root is None:
        _fail("no --out given and LAMP_OUT_ROOT is not set")
    return Path(root)


def _common(config, seed, out):
    try:
        seeds = tuple(int(s) for s in seed.split(",")) if seed else None
        cfg = load_config(config, seeds)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        _fail(str(exc))
    return cfg, _resolve_out(out)


def _run(stage_fn, cfg, out, **kwargs):
    try:
        path = stage_fn(cfg, out, **kwargs)
    except (ConfigError, ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        _fail(f"{type(exc).__name__}: {exc}")
    click.echo(f"wrote {path}")


config_opt = click.option("--config", type=click.Path(exists=True), default=None,
                          help="YAML config; defaults apply when omitted.")
seed_opt = click.option("--seed", default=None,
                        help="Seed tuple world,data,train,eval (overrides config).")
out_opt = click.option("--out", type=click.Path(), default=None,
                       help=f"Run directory (or set {OUT_ENV}).")


@click.group()
def main():
    """Implicit language field navigation pipeline."""


@main.command("gen-world")
@config_opt
@seed_opt
@out_opt
def gen_world_cmd(config, seed, out):
    """Generate the synthetic world JSON."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_gen_world, cfg, out)


@main.command("gen-data")
@config_opt
@seed_opt
@out_opt
def gen_data_cmd(config, seed, out):
    """Sample the pose/embedding dataset from the world."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_gen_data, cfg, out)


@main.command("train")
@config_opt
@seed_opt
@out_opt
def train_cmd(config, seed, out):
    """Train the implicit field on the dataset."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_train, cfg, out)


@main.command("build-graph")
@config_opt
@seed_opt
@out_opt
def build_graph_cmd(config, seed, out):
    """Build the topological graph from dataset poses."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_build_graph, cfg, out)


@main.command("score-graph")
@config_opt
@seed_opt
@out_opt
def score_graph_cmd(config, seed, out):
    """Score nodes and prune the graph to the configured fraction."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_score_graph, cfg, out)


@main.command("plan")
@config_opt
@seed_opt
@out_opt
@click.option("--object-id", required=True, help="Target object id in the world.")
@click.option("--start", default=None,
              help="Start pose as 7 comma-separated floats (tx,ty,tz,qw,qx,qy,qz).")
def plan_cmd(config, seed, out, object_id, start):
    """Plan a coarse-to-fine path to a goal object."""
    cfg, out = _common(config, seed, out)
    start_vec = None
    if start is not None:
        try:
            start_vec = [float(s) for s in start.split(",")]
            if len(start_vec) != 7:
                raise ValueError
        except ValueError:
            _fail("--start must be 7 comma-separated floats")
    _run(pipeline.stage_plan, cfg, out, object_id=object_id, start=start_vec)


@main.command("eval")
@config_opt
@seed_opt
@out_opt
@click.option("--force", is_flag=True, help="Ignore config-hash mismatches on inputs.")
def eval_cmd(config, seed, out, force):
    """Evaluate implicit vs grid/node baselines; write report + figures."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_eval, cfg, out, force=force)


@main.command("ablate")
@config_opt
@seed_opt
@out_opt
@click.option("--force", is_flag=True, help="Ignore config-hash mismatches on inputs.")
def ablate_cmd(config, seed, out, force):
    """Compare node-selection strategies on the pruned graph."""
    cfg, out = _common(config, seed, out)
    _run(pipeline.stage_ablate, cfg, out, force=force)


if __name__ == "__main__":
    main()
