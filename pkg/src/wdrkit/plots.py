"""Figure rendering for pipeline reports.

Every function writes one PNG next to the delimited report it
illustrates and returns the path. Rendering is headless (Agg).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .detector import ImportanceReport
from .evaluation import MetricsReport

_DPI = 120


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_threshold_sweep(reports: Sequence[MetricsReport], path) -> Path:
    taus = [r.threshold for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(taus, [r.adv_recall for r in reports], "o-", label="adversarial recall")
    ax.plot(taus, [r.orig_recall for r in reports], "s-", label="original recall")
    ax.plot(taus, [r.macro_f1 for r in reports], "d--", label="macro F1")
    ax.set_xlabel("decision threshold")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def plot_training_loss(losses: Sequence[float], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(losses) + 1), losses, "o-")
    ax.set_xlabel("boosting round")
    ax.set_ylabel("training log-loss")
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def plot_probability_histogram(probas: Sequence[float], labels: Sequence[int],
                               path, threshold: float = 0.5) -> Path:
    p = np.asarray(probas, dtype=float)
    y = np.asarray(labels, dtype=int)
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.linspace(0, 1, 31)
    ax.hist(p[y == 0], bins=bins, alpha=0.6, label="original")
    ax.hist(p[y == 1], bins=bins, alpha=0.6, label="adversarial")
    ax.axvline(threshold, color="k", linestyle=":", label=f"threshold {threshold:g}")
    ax.set_xlabel("detector probability")
    ax.set_ylabel("count")
    ax.legend()
    return _finish(fig, path)


def plot_importance(report: ImportanceReport, path, top: int = 15) -> Path:
    order = np.argsort(report.gain)[::-1][:top]
    labels = [f"pos {int(i) + 1}" for i in order]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    ypos = np.arange(len(order))[::-1]
    ax1.barh(ypos, report.gain[order], color="tab:blue")
    ax1.set_yticks(ypos, labels)
    ax1.set_xlabel("total split gain")
    ax2.barh(ypos, report.permutation[order], color="tab:orange")
    ax2.set_xlabel("macro-F1 drop when shuffled")
    return _finish(fig, path)


def plot_beeswarm(report: ImportanceReport, path, top: int = 10, seed: int = 0) -> Path:
    order = np.argsort(report.gain)[::-1][:top]
    rng = np.random.default_rng(seed)
    fig, ax = plt.subplots(figsize=(7, 0.55 * len(order) + 1.5))
    for row, f in enumerate(order[::-1]):
        pairs = report.samples[f]
        values = np.array([v for v, _ in pairs])
        deltas = np.array([d for _, d in pairs])
        span = np.ptp(values)
        shade = (values - values.min()) / span if span > 0 else np.full_like(values, 0.5)
        jitter = rng.normal(0, 0.07, size=len(deltas))
        ax.scatter(deltas, np.full(len(deltas), row) + jitter, c=shade,
                   cmap="coolwarm", s=12, alpha=0.8)
    ax.set_yticks(range(len(order)), [f"pos {int(f) + 1}" for f in order[::-1]])
    ax.axvline(0.0, color="k", linewidth=0.8)
    ax.set_xlabel("log-odds contribution")
    sm = plt.cm.ScalarMappable(cmap="coolwarm")
    fig.colorbar(sm, ax=ax, label="feature value (low to high)")
    return _finish(fig, path)
