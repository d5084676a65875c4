"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import EvalReport


def eval_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Per-image fgIoU histogram and a global-metric bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    per_image = [t.fg_iou() for t in report.per_image.values()]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(per_image, bins=20, range=(0.0, 1.0), color="#4878cf", edgecolor="white")
    ax.set_xlabel("per-image fgIoU")
    ax.set_ylabel("images")
    ax.set_title(f"fgIoU distribution over {len(per_image)} images")
    fig.tight_layout()
    path = out_dir / "fgiou_hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    names = ["fgIoU", "precision", "recall", "F-score"]
    values = [report.fg_iou, report.precision, report.recall, report.f_score]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, values, color=["#4878cf", "#6acc65", "#d65f5f", "#956cb4"])
    for bar, value in zip(bars, values):
        ax.text(
            bar.get_x() + bar.get_width() / 2,
            value + 0.01,
            f"{value:.4f}",
            ha="center",
            fontsize=9,
        )
    ax.set_ylim(0, 1.08)
    ax.set_ylabel("global value")
    ax.set_title("pixel metrics (summed tallies)")
    fig.tight_layout()
    path = out_dir / "metrics_bar.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def word_status_figure(counts: dict[str, int], out_dir: str | Path) -> Path:
    """Bar chart of per-word annotation outcomes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 4))
    names = list(counts)
    values = [counts[n] for n in names]
    ax.bar(names, values, color=["#6acc65", "#ee854a", "#d65f5f"][: len(names)])
    for i, value in enumerate(values):
        ax.text(i, value + 0.2, str(value), ha="center", fontsize=9)
    ax.set_ylabel("words")
    ax.set_title("annotation outcomes")
    fig.tight_layout()
    path = out_dir / "word_status.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
