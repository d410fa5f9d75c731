"""Shared test utilities: toy data builders and reference oracles."""

import numpy as np

from wdrkit.detector import _split_gain
from wdrkit.textcore import Origin
from wdrkit.wdr import WdrVector, assemble_vector


def make_vectors(n: int, length: int, seed: int) -> list[WdrVector]:
    """Separable toy set: originals score large, adversarials small."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        adv = k % 2 == 1
        scale = 0.4 if adv else 5.0
        words = int(rng.integers(3, length))
        scores = (rng.random(words) + 0.5) * scale
        out.append(assemble_vector(
            scores.tolist(), length, baseline=float(scores.max()),
            origin=Origin.ADVERSARIAL if adv else Origin.ORIGINAL))
    return out


def brute_force_split(X, g, h, l2, min_child_weight):
    """Reference split search by exhaustive enumeration."""
    best = None
    for f in range(X.shape[1]):
        pairs = sorted(range(len(X)), key=lambda i: X[i, f])
        values = [X[i, f] for i in pairs]
        for k in range(len(values) - 1):
            if values[k] == values[k + 1]:
                continue
            left = pairs[: k + 1]
            right = pairs[k + 1:]
            hl = sum(h[i] for i in left)
            hr = sum(h[i] for i in right)
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gl = sum(g[i] for i in left)
            gr = sum(g[i] for i in right)
            gain = _split_gain(gl, hl, gr, hr, l2)
            t = 0.5 * (values[k] + values[k + 1])
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, t)
    if best is None or best[0] <= 1e-12:
        return None
    return best
