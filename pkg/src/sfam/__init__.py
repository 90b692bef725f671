"""Visual explanations for metric-learning CNNs from exported feature tensors.

Channel importance is scored from a pair of pooled embeddings (Euclidean or
cosine metric), heatmaps are weighted channel sums upsampled bilinearly to
image resolution, and localization quality is measured against bounding-box
annotations.  See the ``sfam`` command-line tool for batch processing of
episode manifests.
"""

from .baselines import decomposition_map, ram_map
from .localization import (
    BoundingBox,
    EpisodeResult,
    LocalizationSummary,
    evaluate_episodes,
    iou,
    largest_component_bbox,
    mask_bbox,
    threshold_mask,
)
from .maps import (
    ActivationMap,
    PairExplanation,
    explain_pair,
    normalize_map,
    sfam_map,
    upsample_bilinear,
)
from .sanity import (
    SanityReport,
    SanityStage,
    randomize_features,
    rank_correlation,
    sanity_sweep,
)
from .store import (
    EpisodeRecord,
    read_manifest,
    read_tensor,
    render_overlay,
    write_tensor,
)
from .tensors import (
    EmbeddingVector,
    FeatureMap,
    cosine_similarity,
    euclidean_distance,
    global_average_pool,
    l2_normalize,
    prototype,
)
from .weights import WeightVector, cis_cosine, cis_euclidean, normalize_weights

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "BoundingBox",
    "EmbeddingVector",
    "EpisodeRecord",
    "EpisodeResult",
    "FeatureMap",
    "LocalizationSummary",
    "PairExplanation",
    "SanityReport",
    "SanityStage",
    "WeightVector",
    "cis_cosine",
    "cis_euclidean",
    "cosine_similarity",
    "decomposition_map",
    "euclidean_distance",
    "evaluate_episodes",
    "explain_pair",
    "global_average_pool",
    "iou",
    "l2_normalize",
    "largest_component_bbox",
    "mask_bbox",
    "normalize_map",
    "normalize_weights",
    "prototype",
    "ram_map",
    "randomize_features",
    "rank_correlation",
    "read_manifest",
    "read_tensor",
    "render_overlay",
    "sanity_sweep",
    "sfam_map",
    "threshold_mask",
    "upsample_bilinear",
    "write_tensor",
]
