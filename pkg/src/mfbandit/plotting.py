"""Figure rendering for run outputs.

Two figures mirror the delimited report files: regret curves against capital
on a log axis, and per-fidelity play histograms with arms ordered by their
target means. Both render to files through the Agg backend, so no display
is needed.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_play_histograms", "render_regret_curves"]

_POLICY_STYLE = {
    "mfucb": {"color": "tab:blue", "label": "MF-UCB"},
    "ucb": {"color": "tab:red", "label": "UCB"},
}


def render_regret_curves(rows: list[dict], path: Path) -> None:
    """Mean regret vs capital, one band per policy.

    rows carry capital, policy, mean, std (floats).
    """
    fig, ax = plt.subplots(figsize=(7, 4.5), dpi=150)
    policies = sorted({r["policy"] for r in rows})
    for pol in policies:
        sub = sorted((r for r in rows if r["policy"] == pol), key=lambda r: r["capital"])
        x = [r["capital"] for r in sub]
        mean = [r["mean"] for r in sub]
        lo = [r["mean"] - r["std"] for r in sub]
        hi = [r["mean"] + r["std"] for r in sub]
        style = _POLICY_STYLE.get(pol, {"color": None, "label": pol})
        ax.plot(x, mean, marker="o", markersize=3, color=style["color"], label=style["label"])
        ax.fill_between(x, lo, hi, color=style["color"], alpha=0.2, linewidth=0)
    ax.set_xscale("log")
    ax.set_xlabel("capital")
    ax.set_ylabel("mean regret")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_play_histograms(rows: list[dict], M: int, path: Path) -> None:
    """Stacked per-fidelity play counts, arms ordered by target mean.

    rows carry arm_rank_by_muM, fidelity, mean_count, policy; one subplot
    per policy.
    """
    policies = sorted({r["policy"] for r in rows})
    fig, axes = plt.subplots(
        len(policies), 1, figsize=(8, 3.0 * len(policies)), dpi=150, squeeze=False
    )
    cmap = plt.get_cmap("viridis", M)
    for i, pol in enumerate(policies):
        ax = axes[i][0]
        sub = [r for r in rows if r["policy"] == pol]
        ranks = sorted({r["arm_rank_by_muM"] for r in sub})
        bottom = {rank: 0.0 for rank in ranks}
        for m in range(1, M + 1):
            counts = {r["arm_rank_by_muM"]: r["mean_count"] for r in sub if r["fidelity"] == m}
            xs = ranks
            ys = [counts.get(rank, 0.0) for rank in ranks]
            ax.bar(
                xs,
                ys,
                bottom=[bottom[rank] for rank in ranks],
                width=1.0,
                linewidth=0,
                color=cmap(m - 1),
                label=f"fidelity {m}",
            )
            for rank, y in zip(ranks, ys):
                bottom[rank] += y
        style = _POLICY_STYLE.get(pol, {"label": pol})
        ax.set_title(style["label"])
        ax.set_ylabel("mean plays")
        ax.legend(fontsize=8)
    axes[-1][0].set_xlabel("arm rank by target mean (ascending)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
