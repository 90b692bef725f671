"""Gradient-free comparison methods: RAM and cosine decomposition.

RAM weights channels by the pooled activations of the image being
visualized, so its map is independent of what the image is compared
against.  Decomposition spreads a cosine similarity score over the query's
spatial grid: with global average pooling, summing the map recovers the
cosine value exactly, which is the module's defining correctness check.
"""

from __future__ import annotations

import numpy as np

from .maps import ActivationMap, sfam_map
from .tensors import EmbeddingVector, FeatureMap, global_average_pool, l2_normalize
from .weights import WeightVector, _max_min_scale

__all__ = ["ram_map", "decomposition_map"]


def ram_map(features: FeatureMap) -> ActivationMap:
    """Single-image heatmap: channels weighted by their own pooled means.

    Weights are max-min normalized before combination so the output scale
    is comparable with the other methods.
    """
    pooled = global_average_pool(features)
    weights = WeightVector(_max_min_scale(pooled.values), normalized=True)
    return sfam_map(features, weights)


def decomposition_map(
    query_features: FeatureMap, support_embedding: EmbeddingVector
) -> ActivationMap:
    """Spatial decomposition of the cosine score between query and support.

    map(i, j) = sum_n A[n, i, j] * s_hat[n] with s_hat the unit support
    embedding.  Under global average pooling,
    sum(map) / (H * W * ||V_query||) equals the cosine similarity.
    """
    s_hat = l2_normalize(support_embedding)
    if len(support_embedding) != query_features.channels:
        raise ValueError(
            f"support embedding length {len(support_embedding)} does not match "
            f"channel count {query_features.channels}"
        )
    combined = np.tensordot(
        s_hat.values.astype(np.float64),
        query_features.values.astype(np.float64),
        axes=1,
    )
    return ActivationMap(combined.astype(np.float32))
