"""Run configuration: one YAML file drives the whole pipeline.

Unknown keys are rejected, every stage writes the fully-resolved config
next to its outputs, and every artifact carries the seed tuple plus a
hash of the resolved config so downstream stages can refuse stale inputs.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

DEFAULT_CONFIG = {
    "seeds": {"world": 7, "data": 11, "train": 13, "eval": 17},
    "world": {
        "extent": [[0.0, 100.0], [0.0, 100.0]],
        "n_objects": 20,
        "d": 32,
        "hard_fraction": 0.5,
    },
    "observation": {
        "fov_half_angle_deg": 90.0,
        "max_range": 20.0,
        "attenuation": 5.0,
        "noise_sigma": 0.01,
    },
    "data": {"n_samples": 50_000},
    "training": {
        "hidden": [128, 128, 128],
        "skip_layers": [],
        "L_pos": 8,
        "L_quat": 3,
        "include_identity": True,
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "batch_size": 256,
        "epochs": 100,
        "prior_alpha": 2.0,
        "prior_beta": 0.5,
        "weight_decay": 0.0,
        "val_fraction": 0.1,
    },
    "graph": {
        "link_radius": 10.0,
        "min_separation": 4.0,
        "keep_fraction": 0.5,
        "weights": [1.0, 1.0, 0.5],
    },
    "planner": {
        "n_candidates": 1024,
        "sigma_pos": 6.0,
        "sigma_yaw": 3.141592653589793,
        "lambda_dist": 5.0,
        "lr": 0.05,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "max_steps": 150,
        "tolerance": 1e-5,
    },
    "eval": {
        "n_queries": 60,
        "success_radius": 4.5,
        "top_fraction": 0.01,
        "budget_tolerance": 0.1,
        "keep_fraction": 0.3,
        "ablation_seeds": [0, 1, 2, 3, 4],
        "ablation_queries": 40,
    },
}


class ConfigError(ValueError):
    pass


def _merge(defaults, overrides, path=""):
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here} must be a mapping")
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path=None, seed_tuple=None) -> dict:
    """Resolve a config file against the defaults; optionally override seeds."""
    overrides = {}
    if path is not None:
        overrides = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(overrides, dict):
            raise ConfigError("config root must be a mapping")
    cfg = _merge(DEFAULT_CONFIG, overrides)
    if seed_tuple is not None:
        names = ("world", "data", "train", "eval")
        if len(seed_tuple) != 4:
            raise ConfigError("seed tuple must be world,data,train,eval")
        cfg["seeds"] = dict(zip(names, (int(s) for s in seed_tuple)))
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def run_meta(cfg: dict, stage: str) -> dict:
    return {
        "stage": stage,
        "seeds": cfg["seeds"],
        "config_hash": config_hash(cfg),
    }


def write_resolved_config(cfg: dict, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.yaml").write_text(
        yaml.safe_dump(cfg, sort_keys=True)
    )


def write_sidecar_meta(artifact_path, meta: dict):
    p = Path(str(artifact_path) + ".meta.json")
    p.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_sidecar_meta(artifact_path) -> dict | None:
    p = Path(str(artifact_path) + ".meta.json")
    if not p.exists():
        return None
    return json.loads(p.read_text())


def check_meta(artifact_path, cfg: dict, force: bool = False):
    """Refuse inputs produced under a different config unless forced."""
    meta = read_sidecar_meta(artifact_path)
    if meta is None:
        return
    if meta.get("config_hash") != config_hash(cfg) and not force:
        raise ConfigError(
            f"{artifact_path} was produced under config hash "
            f"{meta.get('config_hash')}, current is {config_hash(cfg)}; "
            "pass --force to override"
        )
