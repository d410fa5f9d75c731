"""Target-model contract and the built-in linear bag-of-ngrams classifier.

Any system that can answer batched text queries with one raw score per
class can sit behind the detection pipeline. The built-in model keeps
that contract cheap and deterministic: hashed unigram+bigram features
with sublinear term-frequency scaling under a multinomial logistic
regression trained by mini-batch gradient descent.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .textcore import Corpus, TokenizedText, Vocabulary

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for corrupt or structurally invalid model files."""


class ModelVersionError(ModelFormatError):
    """Raised when a model file declares an unsupported format version."""


class TrainingError(ValueError):
    """Raised when training preconditions are violated."""


@runtime_checkable
class LogitsProvider(Protocol):
    """Batch text-to-logits contract every target model must satisfy.

    Implementations must be deterministic: identical input batches yield
    identical outputs, and a batch query equals the concatenation of the
    corresponding single queries.
    """

    num_classes: int

    def query(self, texts: Sequence[TokenizedText]) -> list[np.ndarray]:
        ...


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax (max-shifted)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of empty vector")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def predicted_class(logits) -> int:
    """Index of the maximum logit; ties break toward the lowest index."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("predicted_class of empty vector")
    return int(np.argmax(z))


def predict_logits(provider: LogitsProvider, texts: Sequence[TokenizedText]) -> list[np.ndarray]:
    """Query ``provider`` on a batch and validate the shape contract."""
    if len(texts) == 0:
        raise ValueError("predict_logits requires a non-empty batch")
    out = provider.query(texts)
    if len(out) != len(texts):
        raise ValueError(f"provider returned {len(out)} vectors for {len(texts)} texts")
    for k, vec in enumerate(out):
        if len(vec) != provider.num_classes:
            raise ValueError(
                f"provider returned {len(vec)} logits for text {k}, "
                f"expected {provider.num_classes}"
            )
    return [np.asarray(v, dtype=np.float64) for v in out]


def hashed_features(tokens: Sequence[str], dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Hashed bag of lowercased unigrams and adjacent bigrams.

    Term frequencies are scaled sublinearly (1 + ln tf); colliding keys
    accumulate. Returns parallel (indices, values) arrays with indices
    sorted ascending, so identical token sequences always produce the
    identical sparse vector.
    """
    counts: dict[str, int] = {}
    lowered = [t.lower() for t in tokens]
    for w in lowered:
        counts[w] = counts.get(w, 0) + 1
    for a, b in zip(lowered, lowered[1:]):
        key = a + " " + b
        counts[key] = counts.get(key, 0) + 1
    buckets: dict[int, float] = {}
    for key, tf in counts.items():
        idx = zlib.crc32(key.encode("utf-8")) % dim
        buckets[idx] = buckets.get(idx, 0.0) + 1.0 + math.log(tf)
    if not buckets:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    indices = np.array(sorted(buckets), dtype=np.int64)
    values = np.array([buckets[i] for i in indices], dtype=np.float64)
    return indices, values


@dataclass
class ClassifierTrainConfig:
    epochs: int = 30
    learning_rate: float = 0.5
    l2: float = 1e-6
    feature_dim: int = 2**18
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.feature_dim < 1:
            raise ValueError("epochs, batch_size, and feature_dim must be positive")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("learning_rate must be positive and l2 non-negative")


class LinearTextClassifier:
    """Multinomial logistic regression over hashed n-gram features.

    Immutable once trained; ``query`` is safe for concurrent callers.
    """

    def __init__(self, weights: np.ndarray, bias: np.ndarray,
                 config: ClassifierTrainConfig, vocabulary: Vocabulary | None = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be [num_classes x feature_dim], bias [num_classes]")
        self.config = config
        self.vocabulary = vocabulary if vocabulary is not None else Vocabulary()

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, text: TokenizedText) -> np.ndarray:
        idx, val = hashed_features(text.tokens, self.feature_dim)
        if idx.size == 0:
            return self.bias.copy()
        return self.weights[:, idx] @ val + self.bias

    def query(self, texts: Sequence[TokenizedText]) -> list[np.ndarray]:
        return [self.logits(t) for t in texts]


def _featurize_corpus(corpus: Corpus, dim: int) -> list[tuple[np.ndarray, np.ndarray]]:
    return [hashed_features(ex.text.tokens, dim) for ex in corpus]


def _loss_and_grad(weights: np.ndarray, bias: np.ndarray,
                   docs: list[tuple[np.ndarray, np.ndarray]], labels: np.ndarray,
                   l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy with L2 penalty, plus its analytic gradient.

    Kept as a standalone function so the gradient can be checked against
    finite differences independently of the training loop.
    """
    n = len(docs)
    grad_w = l2 * weights
    grad_b = np.zeros_like(bias)
    loss = 0.5 * l2 * float((weights * weights).sum())
    for (idx, val), y in zip(docs, labels):
        z = (weights[:, idx] @ val + bias) if idx.size else bias.copy()
        z = z - z.max()
        logsumexp = math.log(np.exp(z).sum())
        p = np.exp(z - logsumexp)
        loss += (logsumexp - z[y]) / n
        g = p.copy()
        g[y] -= 1.0
        g /= n
        if idx.size:
            grad_w[:, idx] += np.outer(g, val)
        grad_b += g
    return loss, grad_w, grad_b


def train_classifier(corpus: Corpus, cfg: ClassifierTrainConfig) -> LinearTextClassifier:
    """Fit the built-in model; deterministic for a fixed config and corpus.

    Raises :class:`TrainingError` for an empty corpus or one in which
    fewer than two classes actually appear.
    """
    if len(corpus) == 0:
        raise TrainingError("cannot train on an empty corpus")
    labels = np.array([ex.label for ex in corpus], dtype=np.int64)
    if np.unique(labels).size < 2:
        raise TrainingError("training corpus must contain at least two classes")

    dim = cfg.feature_dim
    docs = _featurize_corpus(corpus, dim)
    weights = np.zeros((corpus.num_classes, dim), dtype=np.float64)
    bias = np.zeros(corpus.num_classes, dtype=np.float64)

    init_loss = _data_loss(weights, bias, docs, labels)
    rng = np.random.default_rng(cfg.seed)
    n = len(docs)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            bsz = batch.size
            # L2 applied as weight decay once per batch
            if cfg.l2 > 0:
                weights *= 1.0 - cfg.learning_rate * cfg.l2
            # per-example gradients against pre-update weights
            grads = []
            for k in batch:
                idx, val = docs[k]
                z = (weights[:, idx] @ val + bias) if idx.size else bias.copy()
                g = softmax(z)
                g[labels[k]] -= 1.0
                grads.append(g / bsz)
            grad_b = np.zeros_like(bias)
            for k, g in zip(batch, grads):
                idx, val = docs[k]
                if idx.size:
                    weights[:, idx] -= cfg.learning_rate * np.outer(g, val)
                grad_b += g
            bias -= cfg.learning_rate * grad_b

    final_loss = _data_loss(weights, bias, docs, labels)
    if not final_loss < init_loss:
        raise TrainingError(
            f"training did not reduce cross-entropy ({init_loss:.6f} -> {final_loss:.6f}); "
            "lower the learning rate"
        )

    counts: dict[str, int] = {}
    for ex in corpus:
        for tok in ex.text.tokens:
            w = tok.lower()
            counts[w] = counts.get(w, 0) + 1
    vocab = Vocabulary.build(sorted(counts, key=lambda w: (-counts[w], w)))
    return LinearTextClassifier(weights, bias, cfg, vocab)


def _data_loss(weights, bias, docs, labels) -> float:
    loss, _, _ = _loss_and_grad(weights, bias, docs, labels, l2=0.0)
    return loss


def save_classifier(model: LinearTextClassifier, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "linear",
        "num_classes": model.num_classes,
        "feature_dim": model.feature_dim,
        "weights": [row.tolist() for row in model.weights],
        "bias": model.bias.tolist(),
        "config": asdict(model.config),
    }
    path.write_text(json.dumps(doc), encoding="utf-8")


def load_classifier(path) -> LinearTextClassifier:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "linear":
        raise ModelFormatError(f"{path}: not a linear classifier file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: format version {doc.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    try:
        weights = np.array(doc["weights"], dtype=np.float64)
        bias = np.array(doc["bias"], dtype=np.float64)
        cfg = ClassifierTrainConfig(**doc["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: corrupt model document ({exc})") from exc
    if weights.ndim != 2 or weights.shape != (doc.get("num_classes"), doc.get("feature_dim")):
        raise ModelFormatError(f"{path}: weight matrix shape mismatch")
    return LinearTextClassifier(weights, bias, cfg)
