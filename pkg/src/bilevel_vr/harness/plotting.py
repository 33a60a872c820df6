"""Matplotlib figures of metrics trajectories, written next to the CSVs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import EngFormatter, FormatStrFormatter  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _panels(rows_by_label):
    sample = next(iter(rows_by_label.values()))[0]
    if sample and sample[0].test_accuracy is not None:
        return [("phi", "validation loss"), ("test_accuracy", "test accuracy")]
    return [("phi", r"$\Phi(x_k)$"), ("grad_norm", r"$\|\nabla\Phi(x_k)\|$")]


def plot_trajectories(rows_by_label, path, title=None):
    """One figure, metrics against outer iteration (top) and samples used (bottom).

    ``rows_by_label`` maps a legend label to a list of per-seed row lists; each
    seed is drawn thinly and the per-iteration median thickly.
    """
    panels = _panels(rows_by_label)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, len(panels), figsize=(4.2 * len(panels), 6.0), squeeze=False)
        for color, (label, seeds) in zip(plt.rcParams["axes.prop_cycle"].by_key()["color"], rows_by_label.items()):
            seeds = [rows for rows in seeds if rows]
            if not seeds:
                continue
            for col, (key, ylabel) in enumerate(panels):
                for row_i, xkey in enumerate(("k", "samples_used")):
                    ax = axes[row_i, col]
                    for rows in seeds:
                        ax.plot([getattr(r, xkey) for r in rows], [getattr(r, key) for r in rows],
                                color=color, lw=0.6, alpha=0.35)
                    n = min(len(rows) for rows in seeds)
                    med = np.median([[getattr(r, key) for r in rows[:n]] for rows in seeds], axis=0)
                    ax.plot([getattr(r, xkey) for r in seeds[0][:n]], med, color=color, lw=1.6, label=label)
                    ax.set_xlabel("outer iteration k" if xkey == "k" else "samples used")
                    if xkey == "samples_used":
                        ax.xaxis.set_major_formatter(EngFormatter(sep=""))
                    ax.set_ylabel(ylabel)
                    if key in ("phi", "grad_norm") and med.min() > 0:
                        ax.set_yscale("log")
                        ax.yaxis.set_major_formatter(FormatStrFormatter("%g"))
                        ax.yaxis.set_minor_formatter(FormatStrFormatter("%g"))
        axes[0, 0].legend()
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_results(results, path, title=None):
    """Convenience wrapper taking ``RunResult`` objects (grouped by config label)."""
    grouped = {}
    for res in results:
        grouped.setdefault(res.config.label, []).append(res.rows)
    return plot_trajectories(grouped, path, title=title)
