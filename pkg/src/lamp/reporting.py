"""Report output: machine-readable JSON, aligned-column CSV for humans,
and matplotlib figures rendered next to the delimited output.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REPORT_COLUMNS = [
    "method", "memory_bytes", "mean_query_time_s",
    "sr_easy", "spl_easy", "gdist_easy",
    "sr_hard", "spl_hard", "gdist_hard",
    "sr_all", "spl_all", "gdist_all",
]

ABLATION_COLUMNS = [
    "method", "sr_mean", "sr_std", "spl_mean", "spl_std", "gdist_mean", "gdist_std",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        if not np.isfinite(value):
            return "--"
        return f"{value:.6g}"
    return str(value)


def write_report_json(rows: list[dict], path, meta: dict | None = None):
    payload = {"meta": meta or {}, "rows": [
        {k: v for k, v in row.items() if k != "records"} for row in rows
    ]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_report_csv(rows: list[dict], path, columns=REPORT_COLUMNS):
    table = [columns] + [[_fmt(row.get(c, "--")) for c in columns] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(columns))]
    lines = [
        ", ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in table
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def render_report_figures(rows: list[dict], out_dir, prefix: str = "report"):
    """SR / GDist / memory comparison charts; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = [r["method"] for r in rows]
    x = np.arange(len(methods))
    written = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    w = 0.35
    ax.bar(x - w / 2, [r.get("sr_easy", np.nan) for r in rows], w, label="easy")
    ax.bar(x + w / 2, [r.get("sr_hard", np.nan) for r in rows], w, label="hard")
    ax.set_xticks(x, methods)
    ax.set_ylabel("success rate")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    p = out_dir / f"{prefix}_sr.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    gd_easy = [r.get("gdist_easy", np.nan) for r in rows]
    gd_hard = [r.get("gdist_hard", np.nan) for r in rows]
    ax.bar(x - w / 2, gd_easy, w, label="easy")
    ax.bar(x + w / 2, gd_hard, w, label="hard")
    ax.set_xticks(x, methods)
    ax.set_ylabel("goal distance (m, successes)")
    ax.legend()
    fig.tight_layout()
    p = out_dir / f"{prefix}_gdist.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(x, [r["memory_bytes"] for r in rows])
    ax.set_xticks(x, methods)
    ax.set_yscale("log")
    ax.set_ylabel("serialized map bytes")
    fig.tight_layout()
    p = out_dir / f"{prefix}_memory.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)
    return written


def render_ablation_figure(rows: list[dict], out_dir, prefix: str = "ablation"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = [r["method"] for r in rows]
    x = np.arange(len(methods))
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    axes[0].bar(x, [r["sr_mean"] for r in rows], yerr=[r["sr_std"] for r in rows])
    axes[0].set_xticks(x, methods, rotation=30, ha="right")
    axes[0].set_ylabel("success rate")
    axes[1].bar(x, [r["gdist_mean"] for r in rows], yerr=[r["gdist_std"] for r in rows])
    axes[1].set_xticks(x, methods, rotation=30, ha="right")
    axes[1].set_ylabel("goal distance (m)")
    fig.tight_layout()
    p = out_dir / f"{prefix}.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return [p]


def render_loss_figure(history: list[dict], out_dir, prefix: str = "training"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = [h["epoch"] for h in history]
    ax.plot(epochs, [h["train_loss"] for h in history], label="train")
    vals = [h["val_loss"] for h in history]
    if any(np.isfinite(v) for v in vals):
        ax.plot(epochs, vals, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend()
    fig.tight_layout()
    p = out_dir / f"{prefix}_loss.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return [p]
