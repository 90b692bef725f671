"""Dense tensor containers and the pooling / similarity primitives.

Everything downstream (importance scores, heatmaps, baselines) is built on
the two containers defined here: a channel-major activation tensor from a
CNN's final convolutional layer, and the pooled embedding vector derived
from it.  All values are stored in 32-bit floats; reductions accumulate in
64-bit for stable, run-to-run reproducible sums.

Containers are immutable after construction (the backing arrays are marked
read-only), and every operation is a pure function, so values can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FeatureMap",
    "EmbeddingVector",
    "global_average_pool",
    "l2_normalize",
    "prototype",
    "euclidean_distance",
    "cosine_similarity",
]


def _frozen_float32(values, name: str) -> np.ndarray:
    """Copy ``values`` into a read-only, C-contiguous float32 array."""
    arr = np.array(values, dtype=np.float32, order="C")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} values must be finite (found NaN or Inf)")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Channel-major (N, H, W) activation tensor, row-major within channels."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_float32(self.values, "FeatureMap")
        if arr.ndim != 3:
            raise ValueError(f"FeatureMap requires a 3-D array, got rank {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"FeatureMap dimensions must be positive, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class EmbeddingVector:
    """Pooled per-channel representation of an image; length N >= 2."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_float32(self.values, "EmbeddingVector")
        if arr.ndim != 1:
            raise ValueError(f"EmbeddingVector requires a 1-D array, got rank {arr.ndim}")
        if arr.shape[0] < 2:
            raise ValueError(
                f"EmbeddingVector requires at least 2 channels, got {arr.shape[0]}"
            )
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


def global_average_pool(fmap: FeatureMap) -> EmbeddingVector:
    """Spatial mean per channel: (N, H, W) -> length-N embedding."""
    means = fmap.values.mean(axis=(1, 2), dtype=np.float64)
    return EmbeddingVector(means.astype(np.float32))


def _norm(values: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(values, dtype=np.float64))))


def l2_normalize(v: EmbeddingVector) -> EmbeddingVector:
    """Scale ``v`` to unit length.

    Raises ValueError for the zero vector, for which the direction (and any
    cosine against it) is undefined.
    """
    n = _norm(v.values)
    if n == 0.0:
        raise ValueError("degenerate embedding: zero vector cannot be normalized")
    return EmbeddingVector((v.values.astype(np.float64) / n).astype(np.float32))


def prototype(supports: list[EmbeddingVector] | tuple[EmbeddingVector, ...]) -> EmbeddingVector:
    """Elementwise mean of the support embeddings of one class."""
    if len(supports) == 0:
        raise ValueError("prototype requires at least one support embedding")
    n = len(supports[0])
    for i, s in enumerate(supports):
        if len(s) != n:
            raise ValueError(
                f"support embedding {i} has length {len(s)}, expected {n}"
            )
    stacked = np.stack([s.values for s in supports])
    return EmbeddingVector(stacked.mean(axis=0, dtype=np.float64).astype(np.float32))


def _check_same_length(a: EmbeddingVector, b: EmbeddingVector) -> None:
    if len(a) != len(b):
        raise ValueError(f"embedding lengths differ: {len(a)} vs {len(b)}")


def euclidean_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """L2 distance between two embeddings of equal length."""
    _check_same_length(a, b)
    diff = a.values - b.values
    return float(np.sqrt(np.sum(np.square(diff), dtype=np.float64)))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two nonzero embeddings, clamped to [-1, 1]."""
    _check_same_length(a, b)
    ah = l2_normalize(a)
    bh = l2_normalize(b)
    dot = float(np.sum(ah.values.astype(np.float64) * bh.values.astype(np.float64)))
    return float(min(1.0, max(-1.0, dot)))
