"""Channel-wise contribution importance scores (CIS) and weight normalization.

The importance of a channel is measured from the pair of pooled embeddings
being compared: the closer the two values on a channel, the larger that
channel's share of the budget

    w_n = 1/(N-1) - (q_n - s_n)^2 / ((N-1) * sum_m (q_m - s_m)^2)

which always sums to 1 with each term in [0, 1/(N-1)].  The cosine variant
applies the same formula to the L2-normalized embeddings.  Before heatmap
assembly the raw scores are stretched to [0, 1] by max-min normalization.

Degenerate inputs are mapped to well-defined outputs rather than dividing
by zero: identical embeddings yield the uniform score 1/N on every channel,
and an all-equal score vector max-min normalizes to all ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import EmbeddingVector, _frozen_float32, l2_normalize

__all__ = ["WeightVector", "cis_euclidean", "cis_cosine", "normalize_weights"]

# Denominators below this (in float64) are treated as exact zeros; guards
# against catastrophic cancellation without masking real signal.
DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Per-channel importance scores; ``normalized`` marks max-min scaled values."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = _frozen_float32(self.values, "WeightVector")
        if arr.ndim != 1:
            raise ValueError(f"WeightVector requires a 1-D array, got rank {arr.ndim}")
        if arr.shape[0] < 2:
            raise ValueError(
                f"WeightVector requires at least 2 channels, got {arr.shape[0]}"
            )
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


def cis_euclidean(q: EmbeddingVector, s: EmbeddingVector) -> WeightVector:
    """Raw contribution scores of each channel to the squared L2 distance.

    Identical embeddings (zero distance) return the uniform vector 1/N:
    every channel contributes equally to a zero distance.
    """
    if len(q) != len(s):
        raise ValueError(f"embedding lengths differ: {len(q)} vs {len(s)}")
    n = len(q)
    d2 = np.square(q.values - s.values)
    total = float(np.sum(d2, dtype=np.float64))
    if total < DEGENERATE_EPS:
        w = np.full(n, 1.0 / n)
    else:
        w = 1.0 / (n - 1) - d2.astype(np.float64) / ((n - 1) * total)
    return WeightVector(w.astype(np.float32), normalized=False)


def cis_cosine(q: EmbeddingVector, s: EmbeddingVector) -> WeightVector:
    """Raw contribution scores under the cosine metric.

    Computed by applying the Euclidean formula to the unit-normalized
    embeddings; squared distance of unit vectors is 2 - 2*cos, so when the
    directions coincide (cos = 1) the uniform degenerate rule applies.
    """
    return cis_euclidean(l2_normalize(q), l2_normalize(s))


def _max_min_scale(values: np.ndarray) -> np.ndarray:
    """Stretch to [0, 1]; an all-equal input maps to all ones."""
    v = values.astype(np.float64)
    lo = float(v.min())
    hi = float(v.max())
    if hi - lo < DEGENERATE_EPS:
        return np.ones_like(values)
    return ((v - lo) / (hi - lo)).astype(np.float32)


def normalize_weights(w: WeightVector) -> WeightVector:
    """Max-min normalize raw scores to [0, 1] for heatmap assembly."""
    if w.normalized:
        raise ValueError("weights are already max-min normalized")
    return WeightVector(_max_min_scale(w.values), normalized=True)
