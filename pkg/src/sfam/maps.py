"""Explanation heatmap assembly: weighted channel sums and bilinear upsampling.

A heatmap is the linear combination of the feature-map channels with their
max-min normalized importance scores.  For display and thresholding it is
bilinearly upsampled to image resolution (half-pixel-center convention) and
max-min normalized to [0, 1].

``explain_pair`` runs the whole pipeline for one query / support-set pair:
pool, build the class prototype, score channels under the chosen metric,
and apply the *same* weight vector to the query and every support tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .tensors import (
    EmbeddingVector,
    FeatureMap,
    _frozen_float32,
    cosine_similarity,
    euclidean_distance,
    global_average_pool,
    prototype,
)
from .weights import WeightVector, cis_cosine, cis_euclidean, normalize_weights

__all__ = [
    "ActivationMap",
    "sfam_map",
    "upsample_bilinear",
    "normalize_map",
    "explain_pair",
    "PairExplanation",
]

METRICS = ("euclidean", "cosine")


@dataclass(frozen=True)
class ActivationMap:
    """H x W scalar explanation map."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_float32(self.values, "ActivationMap")
        if arr.ndim != 2:
            raise ValueError(f"ActivationMap requires a 2-D array, got rank {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"ActivationMap dimensions must be positive, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def sfam_map(features: FeatureMap, weights: WeightVector) -> ActivationMap:
    """Weighted sum of feature channels, clamped at zero.

    The clamp is a no-op on post-ReLU backbones (non-negative activations,
    non-negative weights) and only guards tensors exported from
    pre-activation layers.
    """
    if not weights.normalized:
        raise ValueError("sfam_map requires max-min normalized weights")
    if len(weights) != features.channels:
        raise ValueError(
            f"weight count {len(weights)} does not match "
            f"channel count {features.channels}"
        )
    combined = np.tensordot(
        weights.values.astype(np.float64), features.values.astype(np.float64), axes=1
    )
    return ActivationMap(np.maximum(combined, 0.0).astype(np.float32))


def _axis_coords(out_len: int, in_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel source sampling for one axis: low index, high index, blend."""
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * in_len / out_len - 0.5
    src = np.clip(src, 0.0, in_len - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_len - 1)
    return lo, hi, src - lo


def upsample_bilinear(amap: ActivationMap, out_h: int, out_w: int) -> ActivationMap:
    """Resample to ``out_h`` x ``out_w`` with half-pixel-center bilinear blending.

    Output pixel (i, j) samples source coordinate
    ((i + 0.5) * H / out_h - 0.5, (j + 0.5) * W / out_w - 0.5), clamped to
    the source extent.  Resampling to the input size is the identity.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dimensions must be positive, got {out_h}x{out_w}")
    if (out_h, out_w) == (amap.height, amap.width):
        return ActivationMap(amap.values)
    v = amap.values.astype(np.float64)
    y0, y1, fy = _axis_coords(out_h, amap.height)
    x0, x1, fx = _axis_coords(out_w, amap.width)
    fy = fy[:, None]
    top = (1.0 - fx) * v[y0][:, x0] + fx * v[y0][:, x1]
    bottom = (1.0 - fx) * v[y1][:, x0] + fx * v[y1][:, x1]
    return ActivationMap(((1.0 - fy) * top + fy * bottom).astype(np.float32))


def normalize_map(amap: ActivationMap) -> ActivationMap:
    """Affine stretch to [0, 1]; an all-constant map becomes all zeros."""
    v = amap.values.astype(np.float64)
    lo = float(v.min())
    hi = float(v.max())
    if hi - lo < 1e-12:
        return ActivationMap(np.zeros_like(amap.values))
    return ActivationMap(((v - lo) / (hi - lo)).astype(np.float32))


class PairExplanation(NamedTuple):
    query_map: ActivationMap
    support_maps: list[ActivationMap]
    weights: WeightVector
    similarity: float


def explain_pair(
    query: FeatureMap,
    support_features: Sequence[FeatureMap],
    metric: str = "euclidean",
) -> PairExplanation:
    """Full explanation pipeline for one query against one class's supports.

    Pools all tensors, averages the pooled supports into the class
    prototype, scores channels under ``metric``, and combines each feature
    map with the shared normalized weight vector.  ``similarity`` is the
    decision value between the query embedding and the prototype (distance
    for "euclidean", cosine for "cosine").
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    if len(support_features) == 0:
        raise ValueError("explain_pair requires at least one support feature map")
    for i, s in enumerate(support_features):
        if s.channels != query.channels:
            raise ValueError(
                f"support {i} has {s.channels} channels, query has {query.channels}"
            )
    v_query = global_average_pool(query)
    v_support = prototype([global_average_pool(s) for s in support_features])
    if metric == "euclidean":
        raw = cis_euclidean(v_query, v_support)
        similarity = euclidean_distance(v_query, v_support)
    else:
        raw = cis_cosine(v_query, v_support)
        similarity = cosine_similarity(v_query, v_support)
    shared = normalize_weights(raw)
    return PairExplanation(
        query_map=sfam_map(query, shared),
        support_maps=[sfam_map(s, shared) for s in support_features],
        weights=shared,
        similarity=similarity,
    )
