"""SVG figures: V trajectories per method and AUC box summaries."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .experiment import summarize

_RC = {
    "svg.hashsalt": "resilient-formation",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

COLORS = {"none": "#7f7f7f", "sosh": "#1f77b4", "wmsr": "#2ca02c", "huber": "#d62728"}
LABELS = {"none": "No mitigation", "sosh": "SOSH", "wmsr": "W-MSR", "huber": "Huber"}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def plot_trajectories(trajectories: dict[str, dict[int, list[float]]], path, floor: float = 1e-32) -> Path:
    """Median V[k] per method on a log axis, individual trials drawn faintly."""
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.0, 3.6))
        ax = fig.add_subplot()
        for method, trials in trajectories.items():
            color = COLORS.get(method)
            runs = np.array([np.maximum(np.asarray(v, dtype=float), floor) for _, v in sorted(trials.items())])
            k = np.arange(runs.shape[1])
            for run in runs:
                ax.plot(k, run, color=color, alpha=0.12, linewidth=0.6)
            ax.plot(k, np.median(runs, axis=0), color=color, linewidth=1.6, label=LABELS.get(method, method))
        ax.set_yscale("log")
        ax.set_xlabel("step k")
        ax.set_ylabel("V[k]")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_auc_boxes(rows: list[dict], path) -> Path:
    """Per-method box: median line, Q1-Q3 box, whiskers at min and max."""
    methods = list(dict.fromkeys(r["method"] for r in rows))
    stats = []
    for m in methods:
        s = summarize([r["AUC"] for r in rows if r["method"] == m and not r["diverged"]])
        if s is None:
            continue
        stats.append(
            {"label": LABELS.get(m, m), "med": s.median, "q1": s.q1, "q3": s.q3, "whislo": s.min, "whishi": s.max, "fliers": []}
        )
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(5.0, 3.4))
        ax = fig.add_subplot()
        if stats:
            ax.bxp(stats, showfliers=False, patch_artist=True,
                   boxprops={"facecolor": "#dbe6f3"}, medianprops={"color": "black"})
        ax.set_ylabel("AUC over k = 0..100")
        fig.tight_layout()
        return _save(fig, path)
