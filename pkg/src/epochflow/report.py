"""File reports: delimited tables plus rendered figures for one run.

A report directory contains the difficulty scores, transition counts, bin
distributions, and epoch-summed confusion matrix as CSV, next to three PNG
figures: a Sankey-style flow diagram with correct/incorrect bin splits, a
confusion heatmap, and the difficulty measure histograms.
"""

from __future__ import annotations

import csv
from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Polygon

from .core import ClassSelection, EpochRange, TrainingRun
from .flow import FlowFrame, compute_flow
from .metrics import DifficultyScores, score_all
from .table import confusion_summary

_PALETTE = plt.get_cmap("tab10").colors
_OTHER_COLOR = (0.62, 0.62, 0.62)


def _bin_color(bin_id, class_count: int):
    if bin_id.is_other:
        return _OTHER_COLOR
    return _PALETTE[bin_id.class_idx % len(_PALETTE)]


def write_metrics_csv(run: TrainingRun, scores: DifficultyScores, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["instance_id", "true_class", "misclassification", "variability", "frequency"])
        for instance_id, triple in scores.by_id.items():
            row = run.instance_row(instance_id)
            writer.writerow(
                [
                    instance_id,
                    run.class_labels[int(run.true_classes[row])],
                    repr(float(triple.misclassification)),
                    repr(float(triple.variability)),
                    repr(float(triple.frequency)),
                ]
            )


def write_transitions_csv(frame: FlowFrame, run: TrainingRun, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["from_epoch", "to_epoch", "from_bin", "to_bin", "count"])
        for epoch, matrix in zip(frame.window.transition_starts(), frame.transitions):
            for a, row in enumerate(matrix):
                for b, count in enumerate(row):
                    writer.writerow(
                        [
                            epoch + 1,
                            epoch + 2,
                            frame.bins[a].label(run.class_labels),
                            frame.bins[b].label(run.class_labels),
                            count,
                        ]
                    )


def write_distributions_csv(frame: FlowFrame, run: TrainingRun, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "bin", "correct", "incorrect"])
        for epoch, distribution in zip(frame.window.epochs(), frame.distributions):
            for bin_id, counts in zip(frame.bins, distribution):
                writer.writerow(
                    [epoch + 1, bin_id.label(run.class_labels), counts.correct, counts.incorrect]
                )


def write_confusion_csv(matrix: np.ndarray, labels: tuple[str, ...], path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["true_class", *labels])
        for truth, row in zip(labels, matrix):
            writer.writerow([truth, *[int(v) for v in row]])


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3 - 2 * t)


def render_flow_figure(frame: FlowFrame, run: TrainingRun, path: Path) -> None:
    """Bands between stacked bin bars; bar height is the bin total, the solid
    lower part of each bar is the correct share."""
    bins = frame.bins
    epochs = list(frame.window.epochs())
    total = max(frame.instance_count, 1)
    gap = 0.06 * total
    bar_width = 0.18

    # stacked y-extents per (epoch, bin)
    extents: list[list[tuple[float, float]]] = []
    for distribution in frame.distributions:
        y = 0.0
        per_bin = []
        for counts in distribution:
            per_bin.append((y, y + counts.total))
            y += counts.total + gap
        extents.append(per_bin)

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(epochs), 5.0))
    for e, (distribution, per_bin) in enumerate(zip(frame.distributions, extents)):
        for bin_id, counts, (y0, y1) in zip(bins, distribution, per_bin):
            if counts.total == 0:
                continue
            color = _bin_color(bin_id, run.class_count)
            ax.add_patch(
                plt.Rectangle(
                    (e - bar_width / 2, y0), bar_width, counts.correct, color=color, zorder=3
                )
            )
            ax.add_patch(
                plt.Rectangle(
                    (e - bar_width / 2, y0 + counts.correct),
                    bar_width,
                    counts.incorrect,
                    facecolor=color,
                    alpha=0.35,
                    hatch="///",
                    edgecolor="white",
                    zorder=3,
                )
            )
            if e == 0:
                ax.text(
                    e - bar_width,
                    (y0 + y1) / 2,
                    bin_id.label(run.class_labels),
                    ha="right",
                    va="center",
                    fontsize=9,
                )

    t = np.linspace(0.0, 1.0, 24)
    ease = _smoothstep(t)
    for e, matrix in enumerate(frame.transitions):
        out_offset = [extents[e][a][0] for a in range(len(bins))]
        in_offset = [extents[e + 1][b][0] for b in range(len(bins))]
        for a, row in enumerate(matrix):
            for b, count in enumerate(row):
                if count == 0:
                    continue
                y0, y1 = out_offset[a], in_offset[b]
                xs = e + bar_width / 2 + (1 - bar_width) * t
                top = y0 + (y1 - y0) * ease
                points = np.concatenate(
                    [
                        np.column_stack([xs, top]),
                        np.column_stack([xs[::-1], top[::-1] + count]),
                    ]
                )
                ax.add_patch(
                    Polygon(points, closed=True, facecolor=_bin_color(bins[a], run.class_count), alpha=0.4, lw=0)
                )
                out_offset[a] += count
                in_offset[b] += count

    ax.set_xlim(-0.7, len(epochs) - 0.3)
    ax.set_ylim(-gap, max(y1 for per_bin in extents for _, y1 in per_bin) + gap)
    ax.set_xticks(range(len(epochs)))
    ax.set_xticklabels([str(epoch + 1) for epoch in epochs])
    ax.set_xlabel("epoch")
    ax.set_yticks([])
    for spine in ("top", "right", "left"):
        ax.spines[spine].set_visible(False)
    ax.set_title("instance flow between class bins (hatched = incorrect)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_confusion_figure(matrix: np.ndarray, labels: tuple[str, ...], path: Path) -> None:
    n = len(labels)
    fig, ax = plt.subplots(figsize=(1.0 + 0.55 * n, 0.9 + 0.55 * n))
    image = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(labels, rotation=90, fontsize=8)
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true class")
    threshold = matrix.max() / 2 if matrix.max() else 0.5
    if n <= 15:
        for i in range(n):
            for j in range(n):
                ax.text(
                    j,
                    i,
                    str(int(matrix[i, j])),
                    ha="center",
                    va="center",
                    fontsize=7,
                    color="white" if matrix[i, j] > threshold else "black",
                )
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title("epoch-summed confusion")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_difficulty_figure(scores: DifficultyScores, path: Path) -> None:
    names = ("misclassification", "variability", "frequency")
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2), sharey=True)
    for ax, name in zip(axes, names):
        values = [float(v) for v in scores.values_of(name)]
        ax.hist(values, bins=min(20, max(5, scores.window.k + 1)), color="#4878a8", edgecolor="white")
        ax.set_title(name)
        ax.set_xlim(-0.02, 1.02)
    axes[0].set_ylabel("instances")
    fig.suptitle(f"difficulty measures, epochs {scores.window.first + 1}-{scores.window.last + 1}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def generate_report(
    run: TrainingRun,
    sel: ClassSelection,
    window: EpochRange,
    out_dir: Path | str,
) -> list[Path]:
    """Write every CSV and figure for one run; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    scores = score_all(run, window)
    frame = compute_flow(run, sel, window)
    matrix = confusion_summary(run, window)

    created = []
    for name, writer in (
        ("metrics.csv", lambda p: write_metrics_csv(run, scores, p)),
        ("flow_transitions.csv", lambda p: write_transitions_csv(frame, run, p)),
        ("flow_distributions.csv", lambda p: write_distributions_csv(frame, run, p)),
        ("confusion.csv", lambda p: write_confusion_csv(matrix, run.class_labels, p)),
        ("flow.png", lambda p: render_flow_figure(frame, run, p)),
        ("confusion.png", lambda p: render_confusion_figure(matrix, run.class_labels, p)),
        ("difficulty.png", lambda p: render_difficulty_figure(scores, p)),
    ):
        target = out / name
        writer(target)
        created.append(target)
    return created
