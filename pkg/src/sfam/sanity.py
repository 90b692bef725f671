"""Sensitivity harness: degrade exported features, watch the heatmap decay.

A faithful explanation must depend on what the network computed, so
replacing a growing fraction of feature channels with noise should drive
the recomputed heatmap away from the original.  Degradation is quantified
by Spearman rank correlation over pixels (heatmaps are consumed via
thresholding and ranking, so rank agreement is the relevant signal) plus
the change in localization IoU when ground truth is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .localization import BoundingBox, bbox_from_mask, iou, threshold_mask
from .maps import ActivationMap, FeatureMap, explain_pair, normalize_map, upsample_bilinear

__all__ = [
    "SanityStage",
    "SanityReport",
    "StageOutcome",
    "randomize_features",
    "rank_correlation",
    "sanity_sweep",
    "sweep_stages",
    "derive_seed",
]


@dataclass(frozen=True)
class SanityStage:
    stage_label: str
    rank_correlation: float
    mean_iou_delta: float

    def __post_init__(self):
        if not -1.0 <= self.rank_correlation <= 1.0:
            raise ValueError(
                f"rank correlation must be in [-1, 1], got {self.rank_correlation}"
            )


@dataclass(frozen=True)
class SanityReport:
    stages: tuple[SanityStage, ...]


def randomize_features(features: FeatureMap, fraction: float, seed: int) -> FeatureMap:
    """Replace ceil(fraction * N) pseudo-randomly chosen channels with noise.

    Replacement channels are drawn uniformly from [0, per-channel max].
    The selection and the noise are fully determined by ``seed``; untouched
    channels are bit-identical to the input.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n = features.channels
    # Guard float fuzz in fraction * n (e.g. 0.1 * 30 -> 3.0000000000000004).
    k = max(0, math.ceil(fraction * n - 1e-9))
    if k == 0:
        return features
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=k, replace=False)
    out = features.values.copy()
    for c in chosen:
        peak = max(float(features.values[c].max()), 0.0)
        out[c] = rng.uniform(0.0, peak, size=out[c].shape).astype(np.float32)
    return FeatureMap(out)


def rank_correlation(a: ActivationMap, b: ActivationMap) -> float:
    """Spearman rank correlation over flattened pixels, ties averaged.

    Defined as 0 for a constant map (its ranking carries no information).
    """
    if a.values.shape != b.values.shape:
        raise ValueError(
            f"map dimensions differ: {a.values.shape} vs {b.values.shape}"
        )
    x = a.values.ravel().astype(np.float64)
    y = b.values.ravel().astype(np.float64)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return 0.0
    rx = stats.rankdata(x, method="average")
    ry = stats.rankdata(y, method="average")
    # exact short-circuits for identical / reversed rankings
    if np.array_equal(rx, ry):
        return 1.0
    if np.array_equal(rx + ry, np.full_like(rx, rx.size + 1.0)):
        return -1.0
    rho = float(np.corrcoef(rx, ry)[0, 1])
    return float(np.clip(rho, -1.0, 1.0))


def derive_seed(seed: int, *indices: int) -> int:
    """Stable child seed for (run seed, stage, tensor) combinations."""
    ss = np.random.SeedSequence([int(seed), *[int(i) for i in indices]])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class StageOutcome:
    fraction: float
    stage_label: str
    query_map: ActivationMap
    rank_correlation: float
    iou_delta: float


def _localize(
    raw_map: ActivationMap,
    truth_box: BoundingBox,
    image_size: tuple[int, int],
    threshold: float,
    box_mode: str,
) -> float:
    width, height = image_size
    norm = normalize_map(upsample_bilinear(raw_map, height, width))
    mask = threshold_mask(norm, threshold)
    if not mask.any():
        return 0.0
    return iou(bbox_from_mask(mask, box_mode), truth_box)


def sweep_stages(
    query: FeatureMap,
    supports: Sequence[FeatureMap],
    fractions: Sequence[float],
    seed: int,
    metric: str = "euclidean",
    truth_box: Optional[BoundingBox] = None,
    image_size: Optional[tuple[int, int]] = None,
    threshold: float = 0.2,
    box_mode: str = "component",
) -> list[StageOutcome]:
    """Recompute the heatmap at each randomization fraction.

    Every tensor of the episode (query and supports) is perturbed with its
    own derived seed, so results are independent of evaluation order and
    parallel scheduling.  IoU deltas (perturbed minus original) are 0 when
    no ground truth or image size is supplied.
    """
    base = explain_pair(query, supports, metric)
    score_iou = truth_box is not None and image_size is not None
    base_iou = (
        _localize(base.query_map, truth_box, image_size, threshold, box_mode)
        if score_iou
        else 0.0
    )
    outcomes: list[StageOutcome] = []
    for stage_idx, fraction in enumerate(fractions):
        q = randomize_features(query, fraction, derive_seed(seed, stage_idx, 0))
        s = [
            randomize_features(sup, fraction, derive_seed(seed, stage_idx, t + 1))
            for t, sup in enumerate(supports)
        ]
        perturbed = explain_pair(q, s, metric)
        corr = rank_correlation(base.query_map, perturbed.query_map)
        delta = (
            _localize(perturbed.query_map, truth_box, image_size, threshold, box_mode)
            - base_iou
            if score_iou
            else 0.0
        )
        outcomes.append(
            StageOutcome(
                fraction=float(fraction),
                stage_label=f"fraction={fraction:g}",
                query_map=perturbed.query_map,
                rank_correlation=corr,
                iou_delta=delta,
            )
        )
    return outcomes


def sanity_sweep(
    query: FeatureMap,
    supports: Sequence[FeatureMap],
    fractions: Sequence[float],
    seed: int,
    metric: str = "euclidean",
    truth_box: Optional[BoundingBox] = None,
    image_size: Optional[tuple[int, int]] = None,
    threshold: float = 0.2,
    box_mode: str = "component",
) -> SanityReport:
    """Run the randomization sweep and package per-stage degradation."""
    outcomes = sweep_stages(
        query,
        supports,
        fractions,
        seed,
        metric=metric,
        truth_box=truth_box,
        image_size=image_size,
        threshold=threshold,
        box_mode=box_mode,
    )
    return SanityReport(
        stages=tuple(
            SanityStage(
                stage_label=o.stage_label,
                rank_correlation=o.rank_correlation,
                mean_iou_delta=o.iou_delta,
            )
            for o in outcomes
        )
    )
