"""Report figures rendered to files next to the delimited outputs.

Uses the Agg backend so figure generation works headless.  Only the CLI
report paths import this module; the core library never touches matplotlib.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_training_figure(metrics: Sequence, path: str) -> None:
    """Loss curves plus the learning-rate schedule from logged metrics rows."""
    steps = [m.step for m in metrics]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(steps, [m.mlm_loss for m in metrics], label="MLM loss", color="tab:blue")
    ax.plot(steps, [m.tag_loss for m in metrics], label="tag loss", color="tab:orange")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    for prev, cur in zip(metrics, metrics[1:]):
        if cur.stage != prev.stage:
            ax.axvline(cur.step, color="gray", linestyle=":", linewidth=0.8)
    ax2 = ax.twinx()
    ax2.plot(steps, [m.lr for m in metrics], label="lr", color="tab:green", alpha=0.6)
    ax2.set_ylabel("learning rate")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right", fontsize=8)
    ax.set_title("training loss and learning rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_accuracy_figure(per_phenomenon: Mapping[str, tuple[int, float]],
                         overall: float, path: str) -> None:
    """Horizontal bars of per-phenomenon accuracy with the overall mean."""
    names = sorted(per_phenomenon)
    accs = [per_phenomenon[n][1] for n in names]
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.5 * len(names) + 1.5)))
    ax.barh(range(len(names)), accs, color="tab:blue")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.axvline(overall, color="tab:red", linestyle="--", linewidth=1.0,
               label=f"overall = {overall:.3f}")
    ax.axvline(0.5, color="gray", linestyle=":", linewidth=0.8, label="chance")
    ax.set_xlim(0, 1)
    ax.set_xlabel("accuracy")
    ax.invert_yaxis()
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("minimal-pair accuracy by phenomenon")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_age_histogram(ages_months: Sequence[int], path: str) -> None:
    """Distribution of utterances over child age, in months."""
    fig, ax = plt.subplots(figsize=(8, 4))
    if ages_months:
        lo, hi = min(ages_months), max(ages_months)
        bins = range(lo, hi + 2)
        ax.hist(ages_months, bins=bins, color="tab:blue", edgecolor="white")
    ax.set_xlabel("child age (months)")
    ax.set_ylabel("utterances")
    ax.set_title("corpus age distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
