"""
Figures written next to the CSV reports.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _save(fig, path):
    fig.tight_layout()
    # dropping the Software tag keeps PNG bytes independent of the matplotlib version
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_pr_curves(curves: dict, path, title: str | None = None) -> None:
    """
    Precision against recall, one line per entry of ``curves``.

    ``curves`` maps a label to a list of ``EvaluationReport``; points are
    drawn in the order given (typically increasing threshold).
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        for label, reports in curves.items():
            r = [100 * x.recall for x in reports]
            p = [100 * x.precision for x in reports]
            ax.plot(r, p, marker=".", markersize=3, linewidth=1, label=label)
        ax.set_xlabel("recall (%)")
        ax.set_ylabel("precision (%)")
        ax.set_xlim(0, 100)
        ax.set_ylim(0, 100)
        ax.grid(True, linewidth=0.3, alpha=0.5)
        ax.legend(loc="lower left", frameon=False)
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_error_profile(error, gold_seconds, path, hyp_seconds=None, title: str | None = None) -> None:
    """Error signal over time with gold boundaries in red and hypotheses as dashed lines."""
    values = np.asarray(error.values)
    t = np.arange(len(values)) * error.hop_ms / 1000.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 2.4))
        ax.plot(t, values, color="black", linewidth=0.8)
        for i, g in enumerate(gold_seconds):
            ax.axvline(g, color="red", linewidth=0.6, alpha=0.8, label="gold" if i == 0 else None)
        for i, h in enumerate(hyp_seconds if hyp_seconds is not None else []):
            ax.axvline(h, color="tab:blue", linewidth=0.6, linestyle="--", alpha=0.8,
                       label="hypothesis" if i == 0 else None)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="lower right", bbox_to_anchor=(1.0, 1.0), frameon=False, ncol=2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("prediction error")
        ax.set_xlim(0, t[-1] if len(t) else 1)
        ax.set_title(title or error.utterance_id, loc="left")
        _save(fig, path)
