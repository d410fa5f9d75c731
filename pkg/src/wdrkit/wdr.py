"""Leave-one-word-out reaction scores and the fixed-length detector input.

For a sentence whose predicted class is ``y*``, each word is replaced in
turn by the unknown token and the target model is re-queried. The score
for a word is the logit margin of ``y*`` over the best other class in
that ablated query: positive while the prediction survives the ablation,
negative once it flips. The magnitude-sorted, zero-padded score list is
the detector's input and its length is independent of the task's number
of classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import LogitsProvider, predicted_class
from .textcore import Corpus, Origin, TokenizedText, UNK_TOKEN, substitute

DEFAULT_LENGTH = 64


class WdrFormatError(ValueError):
    """Raised for malformed score-dataset files."""


def margin(logits, top_class: int) -> float:
    """Logit of ``top_class`` minus the maximum logit over all other classes."""
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= top_class < z.size:
        raise ValueError(f"class {top_class} out of range for {z.size} logits")
    if z.size == 1:
        raise ValueError("margin needs at least two classes")
    others = np.delete(z, top_class)
    return float(z[top_class] - others.max())


@dataclass(frozen=True)
class WdrRecord:
    """Reaction score for one word of one sentence."""

    token_index: int
    token: str
    wdr: float


@dataclass(frozen=True)
class WdrVector:
    """Fixed-length, magnitude-sorted, zero-padded reaction scores.

    ``values`` always has the configured length; entries past the word
    count are exactly zero. ``baseline`` is the margin of the unmodified
    sentence and is not part of ``values``.
    """

    values: tuple[float, ...]
    true_length: int
    baseline: float
    origin: Origin = Origin.ORIGINAL

    def __post_init__(self):
        k = min(self.true_length, len(self.values))
        mags = [abs(v) for v in self.values[:k]]
        if any(a < b for a, b in zip(mags, mags[1:])):
            raise ValueError("scores must be sorted by descending magnitude")
        if any(v != 0.0 for v in self.values[k:]):
            raise ValueError("padding entries must be exactly zero")

    def __len__(self) -> int:
        return len(self.values)


def assemble_vector(scores: Sequence[float], length: int, *, true_length: int | None = None,
                    baseline: float = 0.0, origin: Origin = Origin.ORIGINAL) -> WdrVector:
    """Sort scores by descending magnitude, truncate to ``length``, zero-pad.

    Ties in magnitude keep the earlier word first. Sentences longer than
    ``length`` keep their largest-magnitude scores, not a prefix.
    """
    if length < 1:
        raise ValueError("vector length must be at least 1")
    order = sorted(range(len(scores)), key=lambda i: (-abs(scores[i]), i))
    kept = [float(scores[i]) for i in order[:length]]
    kept.extend(0.0 for _ in range(length - len(kept)))
    return WdrVector(tuple(kept), true_length if true_length is not None else len(scores),
                     float(baseline), origin)


def wdr_score(provider: LogitsProvider, text: TokenizedText, i: int,
              top_class: int | None = None) -> WdrRecord:
    """Reaction score for word ``i``; queries one ablated sentence.

    ``top_class`` is the predicted class of the unmodified sentence and is
    computed with one extra query when not supplied.
    """
    if not 0 <= i < len(text.tokens):
        raise IndexError(f"token index {i} out of range for {len(text.tokens)} tokens")
    if top_class is None:
        top_class = predicted_class(provider.query([text])[0])
    ablated = substitute(text, i, UNK_TOKEN)
    logits = provider.query([ablated])[0]
    return WdrRecord(i, text.tokens[i], margin(logits, top_class))


def baseline_reaction(provider: LogitsProvider, text: TokenizedText) -> float:
    """Margin of the unmodified sentence; non-negative by construction."""
    logits = provider.query([text])[0]
    return margin(logits, predicted_class(logits))


def wdr_vector(provider: LogitsProvider, text: TokenizedText, length: int = DEFAULT_LENGTH,
               origin: Origin = Origin.ORIGINAL) -> WdrVector:
    """Score every word of ``text`` and assemble the detector input.

    Issues exactly ``len(text) + 1`` text queries: the unmodified
    sentence (for the predicted class and the baseline) plus one ablation
    per word. A zero-word text yields an all-zero vector.
    """
    n = len(text.tokens)
    batch = [text] + [substitute(text, i, UNK_TOKEN) for i in range(n)]
    logits = provider.query(batch)
    if len(logits) != n + 1:
        raise ValueError(f"provider returned {len(logits)} vectors for {n + 1} texts")
    top_class = predicted_class(logits[0])
    base = margin(logits[0], top_class)
    scores = [margin(logits[i + 1], top_class) for i in range(n)]
    return assemble_vector(scores, length, baseline=base, origin=origin)


def batch_wdr(provider: LogitsProvider, corpus: Corpus,
              length: int = DEFAULT_LENGTH) -> list[WdrVector]:
    """One reaction vector per corpus example, tagged with its origin."""
    out = []
    for k, ex in enumerate(corpus):
        try:
            out.append(wdr_vector(provider, ex.text, length, origin=ex.origin))
        except Exception as exc:
            raise RuntimeError(f"WDR computation failed at corpus example {k}") from exc
    return out


def to_feature_matrix(vectors: Sequence[WdrVector], *,
                      include_baseline: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Stack vectors into a detector-ready (features, labels) pair.

    Labels are 1 for adversarial, 0 for original. ``include_baseline``
    appends the unmodified-sentence margin as one extra trailing feature;
    the default detector input is the sorted score list alone.
    """
    if not vectors:
        dim = 0
        return np.empty((0, dim)), np.empty(0, dtype=np.int64)
    rows = []
    for v in vectors:
        row = list(v.values)
        if include_baseline:
            row.append(v.baseline)
        rows.append(row)
    x = np.array(rows, dtype=np.float64)
    y = np.array([1 if v.origin is Origin.ADVERSARIAL else 0 for v in vectors], dtype=np.int64)
    return x, y


def save_wdr_dataset(vectors: Sequence[WdrVector], path) -> None:
    """Write one JSON object per vector, keyed values/true_length/baseline/origin."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for v in vectors:
            record = {
                "values": list(v.values),
                "true_length": v.true_length,
                "baseline": v.baseline,
                "origin": v.origin.value,
            }
            fh.write(json.dumps(record) + "\n")


def load_wdr_dataset(path) -> list[WdrVector]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                vec = WdrVector(tuple(float(x) for x in record["values"]),
                                int(record["true_length"]), float(record["baseline"]),
                                Origin(record["origin"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise WdrFormatError(f"{path}:{lineno}: bad score record ({exc})") from exc
            out.append(vec)
    return out
