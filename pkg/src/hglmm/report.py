"""Evaluation output: delimited metrics, a readable summary table, figures.

Figures are rendered with the Agg backend straight to files, so reports work
on headless machines and identical inputs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataValidationError
from .retrieval import RECALL_KS, TaskMetrics


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def metrics_tsv_rows(annotation=None, search=None, sentence_mean=None):
    """Flatten task metrics into (task, metric, value) string triples."""
    rows = []
    for task, metrics in (("annotation", annotation), ("search", search)):
        if metrics is None:
            continue
        for k in RECALL_KS:
            rows.append((task, f"recall@{k}", _fmt(metrics.recall_at[k])))
        rows.append((task, "median_rank", _fmt(metrics.median_rank)))
        rows.append((task, "mean_rank", _fmt(metrics.mean_rank)))
    if sentence_mean is not None:
        rows.append(("sentence", "mean_rank", _fmt(sentence_mean)))
    if not rows:
        raise DataValidationError("no metrics to report")
    return rows


def save_metrics_tsv(rows, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("task\tmetric\tvalue\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")


def _rank_cells(metrics: TaskMetrics) -> list[str]:
    cells = [f"{100.0 * metrics.recall_at[k]:.1f}" for k in RECALL_KS]
    cells.append(f"{metrics.median_rank:.1f}")
    cells.append(f"{metrics.mean_rank:.1f}")
    return cells


def format_metrics_table(label: str, annotation=None, search=None, sentence_mean=None) -> str:
    """One-row summary table; recalls in percent, ranks as-is."""
    groups = []
    if annotation is not None:
        groups.append(("image annotation", ("r@1", "r@5", "r@10", "med", "mean"), _rank_cells(annotation)))
    if search is not None:
        groups.append(("image search", ("r@1", "r@5", "r@10", "med", "mean"), _rank_cells(search)))
    if sentence_mean is not None:
        groups.append(("sentences", ("mean",), [f"{sentence_mean:.1f}"]))
    if not groups:
        raise DataValidationError("no metrics to tabulate")

    cell_w = 7
    label_w = max(len("method"), len(label))
    titles = [" " * label_w]
    headers = ["method".ljust(label_w)]
    values = [label.ljust(label_w)]
    for title, cols, cells in groups:
        block_w = cell_w * len(cols) + len(cols) - 1
        titles.append(title.center(block_w))
        headers.append(" ".join(c.rjust(cell_w) for c in cols))
        values.append(" ".join(c.rjust(cell_w) for c in cells))
    sep = "  |  "
    lines = [sep.join(titles).rstrip(), sep.join(headers), sep.join(values)]
    return "\n".join(lines) + "\n"


def render_recall_bars(tasks: dict[str, TaskMetrics], path) -> None:
    """Grouped bars of recall@{1,5,10} per task."""
    if not tasks:
        raise DataValidationError("no tasks to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    slots = np.arange(len(RECALL_KS), dtype=np.float64)
    width = 0.8 / len(tasks)
    for j, (name, metrics) in enumerate(tasks.items()):
        heights = [100.0 * metrics.recall_at[k] for k in RECALL_KS]
        ax.bar(slots + j * width, heights, width=width, label=name)
    ax.set_xticks(slots + 0.4 - width / 2.0)
    ax.set_xticklabels([f"R@{k}" for k in RECALL_KS])
    ax.set_ylabel("recall (%)")
    ax.set_ylim(0.0, 100.0)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def render_rank_histogram(tasks: dict[str, np.ndarray], path) -> None:
    """Histogram of first-truth ranks per task, shared integer bins."""
    if not tasks:
        raise DataValidationError("no tasks to plot")
    top = max(int(np.max(r)) for r in tasks.values())
    bins = np.arange(0.5, top + 1.5)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, ranks in tasks.items():
        ax.hist(ranks, bins=bins, histtype="step", label=name)
    ax.set_xlabel("rank of first ground-truth match")
    ax.set_ylabel("queries")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def render_loglik_trace(trace, path) -> None:
    """EM log-likelihood against the iteration count."""
    t = np.asarray(trace, dtype=np.float64)
    if t.ndim != 1 or t.size < 1:
        raise DataValidationError("trace must be a non-empty vector")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(np.arange(t.size), t, marker=".")
    ax.set_xlabel("EM iteration")
    ax.set_ylabel("log-likelihood")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
