"""Figure rendering for sweep and evaluation reports.

Pure file output: the Agg backend is forced so figures render headless,
next to the CSVs they visualize.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .sim import AccuracyCell, SweepRow

log = logging.getLogger(__name__)

__all__ = ["plot_accuracy", "plot_sweep"]


def plot_sweep(rows: Sequence[SweepRow], path: str | Path) -> None:
    """Outage probability versus compression ratio, one line per framework."""
    frameworks = sorted({r.framework for r in rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for fw in frameworks:
        points = [(r.compression_ratio, r.outage_probability)
                  for r in rows if r.framework == fw]
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=fw)
    ax.set_xlabel("compression ratio")
    ax.set_ylabel("outage probability")
    ax.set_ylim(bottom=0.0)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    log.info("wrote figure %s", path)


def plot_accuracy(cells: Sequence[AccuracyCell], path: str | Path) -> None:
    """Per-class AP and mAP versus compression ratio."""
    classes = sorted({c.class_name for c in cells if c.class_name != "mAP"})
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for class_name in classes:
        points = sorted((c.ratio, c.ap) for c in cells if c.class_name == class_name)
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", linewidth=1.0, alpha=0.8, label=class_name)
    map_points = sorted((c.ratio, c.ap) for c in cells if c.class_name == "mAP")
    if map_points:
        ax.plot([p[0] for p in map_points], [p[1] for p in map_points],
                marker="s", linewidth=2.2, color="black", label="mAP")
    ax.set_xlabel("compression ratio")
    ax.set_ylabel("average precision")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    log.info("wrote figure %s", path)
