"""Detection metrics, threshold sweeps, and transfer evaluation.

The adversarial origin is the positive class throughout. Macro-F1 is
the unweighted mean of the per-class F1 scores; zero-denominator
rates are reported as 0.0 and flagged rather than raised.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .detector import DetectorModel, predict_proba_batch
from .textcore import Origin
from .wdr import WdrVector

DEFAULT_SWEEP_GRID = (0.5, 0.4, 0.3, 0.15)


class BalanceWarning(UserWarning):
    """Emitted when an evaluation set strays from a 50/50 class split."""


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with adversarial as the positive class."""

    tp_adv: int
    fn_adv: int
    tp_orig: int
    fp_adv: int

    def __post_init__(self):
        if min(self.tp_adv, self.fn_adv, self.tp_orig, self.fp_adv) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp_adv + self.fn_adv + self.tp_orig + self.fp_adv


@dataclass(frozen=True)
class MetricsReport:
    threshold: float
    counts: ConfusionCounts
    adv_recall: float
    orig_recall: float
    precision_adv: float
    f1_adv: float
    f1_orig: float
    macro_f1: float
    zero_division_flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n": self.counts.total,
            "counts": {
                "tp_adv": self.counts.tp_adv,
                "fn_adv": self.counts.fn_adv,
                "tp_orig": self.counts.tp_orig,
                "fp_adv": self.counts.fp_adv,
            },
            "adv_recall": self.adv_recall,
            "orig_recall": self.orig_recall,
            "precision_adv": self.precision_adv,
            "f1_adv": self.f1_adv,
            "f1_orig": self.f1_orig,
            "macro_f1": self.macro_f1,
            "zero_division_flags": list(self.zero_division_flags),
        }


def _ratio(num: int, denom: int, name: str, flags: list[str]) -> float:
    if denom == 0:
        flags.append(name)
        return 0.0
    return num / denom


def _f1(precision: float, recall: float, name: str, flags: list[str]) -> float:
    if precision + recall == 0:
        flags.append(name)
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_metrics(probas: Sequence[float], labels: Sequence[int],
                    threshold: float = 0.5) -> MetricsReport:
    """Score detection probabilities against origin labels (1 = adversarial).

    An input counts as flagged adversarial iff its probability strictly
    exceeds the threshold. Warns when the evaluated set deviates from
    class balance by more than five points.
    """
    if len(probas) != len(labels):
        raise ValueError(
            f"got {len(probas)} probabilities for {len(labels)} labels"
        )
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    p = np.asarray(probas, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.size and abs(float(y.mean()) - 0.5) > 0.05:
        warnings.warn(
            f"evaluation set is unbalanced: {int(y.sum())}/{y.size} adversarial",
            BalanceWarning, stacklevel=2,
        )
    pred = (p > threshold).astype(np.int64)
    counts = ConfusionCounts(
        tp_adv=int(np.sum((pred == 1) & (y == 1))),
        fn_adv=int(np.sum((pred == 0) & (y == 1))),
        tp_orig=int(np.sum((pred == 0) & (y == 0))),
        fp_adv=int(np.sum((pred == 1) & (y == 0))),
    )
    flags: list[str] = []
    adv_recall = _ratio(counts.tp_adv, counts.tp_adv + counts.fn_adv,
                        "adv_recall", flags)
    orig_recall = _ratio(counts.tp_orig, counts.tp_orig + counts.fp_adv,
                         "orig_recall", flags)
    precision_adv = _ratio(counts.tp_adv, counts.tp_adv + counts.fp_adv,
                           "precision_adv", flags)
    precision_orig = _ratio(counts.tp_orig, counts.tp_orig + counts.fn_adv,
                            "precision_orig", flags)
    f1_adv = _f1(precision_adv, adv_recall, "f1_adv", flags)
    f1_orig = _f1(precision_orig, orig_recall, "f1_orig", flags)
    return MetricsReport(
        threshold=threshold,
        counts=counts,
        adv_recall=adv_recall,
        orig_recall=orig_recall,
        precision_adv=precision_adv,
        f1_adv=f1_adv,
        f1_orig=f1_orig,
        macro_f1=(f1_adv + f1_orig) / 2,
        zero_division_flags=tuple(flags),
    )


def _labels_of(vectors: Sequence[WdrVector]) -> list[int]:
    return [1 if v.origin is Origin.ADVERSARIAL else 0 for v in vectors]


def evaluate_detector(model: DetectorModel, vectors: Sequence[WdrVector],
                      threshold: float | None = None) -> MetricsReport:
    """One labeled evaluation pass at a single threshold."""
    probas = predict_proba_batch(model, vectors)
    tau = model.threshold if threshold is None else threshold
    return compute_metrics(probas, _labels_of(vectors), tau)


def threshold_sweep(model: DetectorModel, vectors: Sequence[WdrVector],
                    thresholds: Sequence[float] = DEFAULT_SWEEP_GRID,
                    ) -> list[MetricsReport]:
    """Evaluate every threshold from one cached probability pass.

    Reports come back in the given threshold order. Recall must move
    monotonically with the threshold — a violation indicates a metric
    bug, so it raises rather than returning bad numbers.
    """
    for tau in thresholds:
        if not 0 < tau < 1:
            raise ValueError("thresholds must lie in (0, 1)")
    probas = predict_proba_batch(model, vectors)
    labels = _labels_of(vectors)
    reports = [compute_metrics(probas, labels, tau) for tau in thresholds]
    by_tau = sorted(reports, key=lambda r: r.threshold)
    for lo, hi in zip(by_tau, by_tau[1:]):
        if hi.adv_recall > lo.adv_recall + 1e-12 or hi.orig_recall < lo.orig_recall - 1e-12:
            raise RuntimeError(
                "recall failed to move monotonically across thresholds "
                f"({lo.threshold} -> {hi.threshold})"
            )
    return reports


@dataclass(frozen=True)
class TransferCase:
    """One (model, dataset, attack) configuration plus its data source."""

    model: str
    dataset: str
    attack: str
    source: str = ""


@dataclass(frozen=True)
class TransferConfig:
    train: TransferCase
    tests: tuple[TransferCase, ...]


@dataclass
class TransferTable:
    rows: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"rows": self.rows}


def run_transfer_matrix(model: DetectorModel, cfg: TransferConfig,
                        load_vectors: Callable[[TransferCase], Sequence[WdrVector]],
                        threshold: float | None = None) -> TransferTable:
    """Evaluate one frozen detector across every test configuration.

    ``load_vectors`` resolves a case to its labeled score vectors; a
    resolution failure is reported with the offending case named. Each
    row records which configuration components differ from the
    training case. The detector is never refit.
    """
    table = TransferTable()
    for case in cfg.tests:
        try:
            vectors = load_vectors(case)
        except Exception as exc:
            raise RuntimeError(
                f"cannot resolve transfer case (model={case.model!r}, "
                f"dataset={case.dataset!r}, attack={case.attack!r}, "
                f"source={case.source!r}): {exc}"
            ) from exc
        report = evaluate_detector(model, vectors, threshold)
        changed = [name for name in ("model", "dataset", "attack")
                   if getattr(case, name) != getattr(cfg.train, name)]
        table.rows.append({
            "model": case.model,
            "dataset": case.dataset,
            "attack": case.attack,
            "changed": changed,
            "f1": report.macro_f1,
            "adv_recall": report.adv_recall,
            "precision": report.precision_adv,
            "orig_recall": report.orig_recall,
            "n": report.counts.total,
        })
    return table


def format_metrics_table(reports: Sequence[MetricsReport]) -> str:
    """Fixed-width text rendering of one report per row."""
    headers = ["threshold", "macro_f1", "adv_recall", "orig_recall",
               "precision_adv", "n"]
    rows = [[f"{r.threshold:.2f}", f"{r.macro_f1:.4f}", f"{r.adv_recall:.4f}",
             f"{r.orig_recall:.4f}", f"{r.precision_adv:.4f}",
             str(r.counts.total)] for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def save_report(payload: dict, path) -> None:
    """Write one JSON report document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def save_report_lines(payloads: Sequence[dict], path) -> None:
    """Write line-delimited JSON, one object per row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for obj in payloads:
            fh.write(json.dumps(obj) + "\n")
