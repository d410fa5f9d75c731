"""Gradient-boosted tree detector over reaction-score vectors.

Implements Newton boosting on the logistic loss from scratch: exact
greedy split search over midpoint thresholds, second-order leaf
weights with L2 regularization, and versioned JSON persistence. A
small logistic-regression detector is included as a comparison
baseline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .textcore import Origin
from .wdr import WdrVector, to_feature_matrix

FORMAT_VERSION = 1


class DetectorFormatError(ValueError):
    """Raised when a detector file is corrupt or structurally invalid."""


class DetectorVersionError(DetectorFormatError):
    """Raised when a detector file declares an unsupported version."""


class DetectorTrainingError(ValueError):
    """Raised when the training set cannot support fitting."""


@dataclass
class TreeNode:
    """Binary regression-tree node.

    Internal nodes carry (feature, threshold, left, right): samples
    with value < threshold go left, the rest right. Non-finite values
    follow ``default_left`` (score vectors are always finite, so this
    only matters for exotic callers). Leaves carry ``weight``, already
    scaled by the learning rate.
    """

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0
    default_left: bool = True

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def output(self, x: np.ndarray) -> float:
        node = self
        while not node.is_leaf:
            v = x[node.feature]
            if math.isnan(v):
                node = node.left if node.default_left else node.right
            else:
                node = node.left if v < node.threshold else node.right
        return node.weight


@dataclass
class GbtConfig:
    num_trees: int = 29
    max_depth: int = 3
    learning_rate: float = 0.34
    l2: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.l2 < 0 or self.min_child_weight < 0:
            raise ValueError("l2 and min_child_weight must be non-negative")


@dataclass
class TrainingReport:
    """Per-round training trace: log-loss after each boosting round."""

    log_loss: list[float] = field(default_factory=list)
    n_samples: int = 0
    n_adversarial: int = 0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _split_gain(gl: float, hl: float, gr: float, hr: float, l2: float) -> float:
    g, h = gl + gr, hl + hr
    return 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - g * g / (h + l2))


def _best_split(X: np.ndarray, g: np.ndarray, h: np.ndarray, idx: np.ndarray,
                l2: float, min_child_weight: float,
                ) -> tuple[float, int, float] | None:
    """Exact greedy search: best (gain, feature, threshold) or None.

    Thresholds are midpoints between consecutive distinct sorted
    values; a split is valid only when both children meet the minimum
    hessian weight. Ties break toward the lowest feature index, then
    the lowest threshold.
    """
    g_total = float(g[idx].sum())
    h_total = float(h[idx].sum())
    best: tuple[float, int, float] | None = None
    for f in range(X.shape[1]):
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        values = col[order]
        gs = g[idx][order]
        hs = h[idx][order]
        gl = hl = 0.0
        for k in range(len(values) - 1):
            gl += float(gs[k])
            hl += float(hs[k])
            if values[k] == values[k + 1]:
                continue
            hr = h_total - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gain = _split_gain(gl, hl, g_total - gl, hr, l2)
            t = 0.5 * (float(values[k]) + float(values[k + 1]))
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, t)
    if best is None or best[0] <= 1e-12:
        return None
    return best


def _build_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, idx: np.ndarray,
                depth: int, cfg: GbtConfig) -> TreeNode:
    if depth < cfg.max_depth:
        found = _best_split(X, g, h, idx, cfg.l2, cfg.min_child_weight)
        if found is not None:
            _, f, t = found
            left_mask = X[idx, f] < t
            left = _build_tree(X, g, h, idx[left_mask], depth + 1, cfg)
            right = _build_tree(X, g, h, idx[~left_mask], depth + 1, cfg)
            return TreeNode(feature=f, threshold=t, left=left, right=right)
    w = -float(g[idx].sum()) / (float(h[idx].sum()) + cfg.l2)
    return TreeNode(weight=w * cfg.learning_rate)


def fit_gbt(X: np.ndarray, y: np.ndarray, cfg: GbtConfig, base: float = 0.0,
            ) -> tuple[list[TreeNode], TrainingReport]:
    """Boost ``cfg.num_trees`` rounds on raw feature rows.

    Each round fits one tree to the current gradient/hessian of the
    logistic loss and adds its (learning-rate-scaled) outputs to the
    running log-odds.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DetectorTrainingError("X must be 2-D with one label per row")
    n = X.shape[0]
    report = TrainingReport(n_samples=n, n_adversarial=int(y.sum()))
    preds = np.full(n, base, dtype=np.float64)
    trees: list[TreeNode] = []
    all_idx = np.arange(n)
    for _ in range(cfg.num_trees):
        p = _sigmoid(preds)
        g = p - y
        h = p * (1.0 - p)
        root = _build_tree(X, g, h, all_idx, 0, cfg)
        trees.append(root)
        preds += np.array([root.output(row) for row in X])
        report.log_loss.append(_log_loss(y, _sigmoid(preds)))
    return trees, report


@dataclass
class DetectorModel:
    """Frozen tree ensemble mapping one score vector to log-odds.

    ``L`` is the expected vector length; when ``include_baseline`` is
    set the unmodified-sentence reaction is appended as one extra
    feature column.
    """

    trees: list[TreeNode]
    L: int
    base: float = 0.0
    threshold: float = 0.5
    config: GbtConfig = field(default_factory=GbtConfig)
    include_baseline: bool = False

    @property
    def width(self) -> int:
        return self.L + (1 if self.include_baseline else 0)

    def _features(self, v: WdrVector) -> np.ndarray:
        if len(v.values) != self.L:
            raise ValueError(
                f"vector length {len(v.values)} does not match model length {self.L}"
            )
        x = np.array(v.values, dtype=np.float64)
        if self.include_baseline:
            x = np.append(x, v.baseline)
        return x

    def raw_score(self, x: np.ndarray) -> float:
        if x.shape != (self.width,):
            raise ValueError(f"expected feature row of width {self.width}")
        return self.base + sum(t.output(x) for t in self.trees)

    def proba_raw(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return _sigmoid(np.array([self.raw_score(row) for row in X]))


def fit_detector(train: Sequence[WdrVector], cfg: GbtConfig | None = None, *,
                 include_baseline: bool = False, threshold: float = 0.5,
                 base: float = 0.0) -> tuple[DetectorModel, TrainingReport]:
    """Fit the tree ensemble on labeled score vectors.

    Labels come from each vector's origin tag (adversarial = 1). Both
    classes must be present and all vectors must share one length.
    """
    cfg = cfg or GbtConfig()
    vectors = list(train)
    if not vectors:
        raise DetectorTrainingError("empty training set")
    lengths = {len(v.values) for v in vectors}
    if len(lengths) != 1:
        raise DetectorTrainingError(f"inconsistent vector lengths: {sorted(lengths)}")
    X, y = to_feature_matrix(vectors, include_baseline=include_baseline)
    if len(set(y.tolist())) < 2:
        raise DetectorTrainingError("training set must contain both origins")
    trees, report = fit_gbt(X, y, cfg, base=base)
    model = DetectorModel(trees=trees, L=lengths.pop(), base=base,
                          threshold=threshold, config=cfg,
                          include_baseline=include_baseline)
    return model, report


def predict_proba(model: DetectorModel, v: WdrVector) -> float:
    """Probability that ``v`` came from an adversarial input."""
    return float(model.proba_raw(model._features(v))[0])


def predict_proba_batch(model: DetectorModel, vectors: Sequence[WdrVector]) -> np.ndarray:
    if not vectors:
        return np.zeros(0)
    X = np.stack([model._features(v) for v in vectors])
    return model.proba_raw(X)


def classify(model: DetectorModel, v: WdrVector, threshold: float | None = None) -> Origin:
    """Adversarial iff the probability strictly exceeds the threshold."""
    tau = model.threshold if threshold is None else threshold
    if not 0 < tau < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return Origin.ADVERSARIAL if predict_proba(model, v) > tau else Origin.ORIGINAL


def _macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    # local to avoid a dependency on the evaluation module
    f1s = []
    for cls in (0, 1):
        tp = int(np.sum((y_pred == cls) & (y_true == cls)))
        fp = int(np.sum((y_pred == cls) & (y_true != cls)))
        fn = int(np.sum((y_pred != cls) & (y_true == cls)))
        denom = 2 * tp + fp + fn
        f1s.append((2 * tp / denom) if denom else 0.0)
    return float(sum(f1s) / 2)


@dataclass
class ImportanceReport:
    """Per-feature-position influence measures.

    ``gain`` replays the boosting statistics of the given evaluation
    set through the frozen trees and totals the split gain per
    feature. ``permutation`` is the macro-F1 drop when one feature
    column is shuffled (averaged over repetitions). ``samples`` holds,
    per feature, (feature value, log-odds delta) pairs suitable for
    beeswarm-style plots.
    """

    gain: np.ndarray
    permutation: np.ndarray
    baseline_macro_f1: float
    samples: list[list[tuple[float, float]]]

    def as_dict(self) -> dict:
        return {
            "gain": [float(v) for v in self.gain],
            "permutation": [float(v) for v in self.permutation],
            "baseline_macro_f1": self.baseline_macro_f1,
            "samples": [[[float(a), float(b)] for a, b in per_feat]
                        for per_feat in self.samples],
        }


def feature_importance(model: DetectorModel, vectors: Sequence[WdrVector], *,
                       permutation_repeats: int = 5, seed: int = 0,
                       ) -> ImportanceReport:
    if not vectors:
        raise ValueError("feature_importance requires a non-empty evaluation set")
    X, y = to_feature_matrix(vectors, include_baseline=model.include_baseline)
    n, width = X.shape
    gain = np.zeros(width)
    deltas = np.zeros((n, width))
    preds = np.full(n, model.base)

    for tree in model.trees:
        p = _sigmoid(preds)
        g = p - y
        h = p * (1.0 - p)
        out = np.array([tree.output(row) for row in X])

        def walk(node: TreeNode, idx: np.ndarray, parent_value: float | None) -> None:
            if idx.size == 0:
                return
            value = float(out[idx].mean())
            if parent_value is not None:
                deltas[idx, node_feature_stack[-1]] += value - parent_value
            if node.is_leaf:
                return
            left_mask = X[idx, node.feature] < node.threshold
            li, ri = idx[left_mask], idx[~left_mask]
            if li.size and ri.size:
                gain[node.feature] += _split_gain(
                    float(g[li].sum()), float(h[li].sum()),
                    float(g[ri].sum()), float(h[ri].sum()), model.config.l2)
            node_feature_stack.append(node.feature)
            walk(node.left, li, value)
            walk(node.right, ri, value)
            node_feature_stack.pop()

        node_feature_stack: list[int] = []
        walk(tree, np.arange(n), None)
        preds += out

    probas = _sigmoid(preds)
    base_pred = (probas > model.threshold).astype(int)
    baseline = _macro_f1(y, base_pred)

    rng = np.random.default_rng(seed)
    permutation = np.zeros(width)
    for f in range(width):
        drops = []
        for _ in range(permutation_repeats):
            Xp = X.copy()
            Xp[:, f] = Xp[rng.permutation(n), f]
            pp = model.proba_raw(Xp)
            drops.append(baseline - _macro_f1(y, (pp > model.threshold).astype(int)))
        permutation[f] = float(np.mean(drops))

    samples = [
        [(float(X[i, f]), float(deltas[i, f])) for i in range(n)]
        for f in range(width)
    ]
    return ImportanceReport(gain=gain, permutation=permutation,
                            baseline_macro_f1=baseline, samples=samples)


def _node_to_json(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"w": node.weight}
    return {
        "f": node.feature,
        "t": node.threshold,
        "l": _node_to_json(node.left),
        "r": _node_to_json(node.right),
    }


def _node_from_json(obj, width: int, depth: int, max_depth: int) -> TreeNode:
    if not isinstance(obj, dict):
        raise DetectorFormatError("tree node must be an object")
    if "w" in obj:
        if not isinstance(obj["w"], (int, float)) or isinstance(obj["w"], bool):
            raise DetectorFormatError("leaf weight must be a number")
        return TreeNode(weight=float(obj["w"]))
    if not {"f", "t", "l", "r"} <= obj.keys():
        raise DetectorFormatError("internal node must have keys f, t, l, r")
    f, t = obj["f"], obj["t"]
    if not isinstance(f, int) or isinstance(f, bool) or not 0 <= f < width:
        raise DetectorFormatError(f"feature index {f!r} out of range [0, {width})")
    if not isinstance(t, (int, float)) or isinstance(t, bool) or not math.isfinite(t):
        raise DetectorFormatError("split threshold must be finite")
    if depth >= max_depth:
        raise DetectorFormatError(f"tree deeper than declared max depth {max_depth}")
    return TreeNode(
        feature=f, threshold=float(t),
        left=_node_from_json(obj["l"], width, depth + 1, max_depth),
        right=_node_from_json(obj["r"], width, depth + 1, max_depth),
    )


def save_detector(model: DetectorModel, path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "gbt",
        "L": model.L,
        "base": model.base,
        "threshold": model.threshold,
        "config": {
            "num_trees": model.config.num_trees,
            "max_depth": model.config.max_depth,
            "learning_rate": model.config.learning_rate,
            "l2": model.config.l2,
            "min_child_weight": model.config.min_child_weight,
            "seed": model.config.seed,
            "include_baseline": model.include_baseline,
        },
        "trees": [_node_to_json(t) for t in model.trees],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_detector(path) -> DetectorModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DetectorFormatError(f"cannot read detector file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise DetectorFormatError("detector file must hold a JSON object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise DetectorVersionError(
            f"unsupported detector format version {version!r} (expected {FORMAT_VERSION})"
        )
    if payload.get("kind") != "gbt":
        raise DetectorFormatError(f"unsupported detector kind {payload.get('kind')!r}")
    try:
        raw_cfg = dict(payload["config"])
        include_baseline = bool(raw_cfg.pop("include_baseline", False))
        cfg = GbtConfig(**raw_cfg)
        L = payload["L"]
        base = float(payload["base"])
        threshold = float(payload["threshold"])
        raw_trees = payload["trees"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DetectorFormatError(f"malformed detector file {path}: {exc}") from exc
    if not isinstance(L, int) or isinstance(L, bool) or L < 1:
        raise DetectorFormatError("L must be a positive integer")
    if not isinstance(raw_trees, list):
        raise DetectorFormatError("trees must be a list")
    width = L + (1 if include_baseline else 0)
    trees = [_node_from_json(t, width, 0, cfg.max_depth) for t in raw_trees]
    return DetectorModel(trees=trees, L=L, base=base, threshold=threshold,
                         config=cfg, include_baseline=include_baseline)


@dataclass
class LogisticDetector:
    """Linear comparison baseline over the same score vectors."""

    weights: np.ndarray
    bias: float
    L: int
    include_baseline: bool = False

    def predict_proba(self, v: WdrVector) -> float:
        if len(v.values) != self.L:
            raise ValueError(
                f"vector length {len(v.values)} does not match model length {self.L}"
            )
        x = np.array(v.values, dtype=np.float64)
        if self.include_baseline:
            x = np.append(x, v.baseline)
        return float(_sigmoid(np.array([x @ self.weights + self.bias]))[0])


def fit_logistic_detector(train: Sequence[WdrVector], *, learning_rate: float = 0.1,
                          epochs: int = 300, l2: float = 1e-4,
                          include_baseline: bool = False) -> LogisticDetector:
    """Full-batch gradient descent on the logistic loss; deterministic."""
    vectors = list(train)
    if not vectors:
        raise DetectorTrainingError("empty training set")
    X, y = to_feature_matrix(vectors, include_baseline=include_baseline)
    if len(set(y.tolist())) < 2:
        raise DetectorTrainingError("training set must contain both origins")
    n, width = X.shape
    w = np.zeros(width)
    b = 0.0
    for _ in range(epochs):
        p = _sigmoid(X @ w + b)
        err = p - y
        w -= learning_rate * (X.T @ err / n + l2 * w)
        b -= learning_rate * float(err.mean())
    return LogisticDetector(weights=w, bias=b, L=len(vectors[0].values),
                            include_baseline=include_baseline)
