"""Localization scoring: threshold maps, extract boxes, measure IoU.

The protocol: cut the normalized heatmap at a fraction of its maximum,
take the tight box around the largest 4-connected region of the resulting
mask (or around the whole mask in ``"all"`` mode), and compare against the
annotated box with intersection-over-union.  An episode counts as a hit
when IoU >= 0.5.

All pixel coordinates are half-open: a box covers columns
[x_min, x_max) and rows [y_min, y_max).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import ndimage

from .maps import ActivationMap

__all__ = [
    "BoundingBox",
    "EpisodeResult",
    "LocalizationSummary",
    "threshold_mask",
    "largest_component_bbox",
    "mask_bbox",
    "bbox_from_mask",
    "iou",
    "evaluate_episodes",
]

HIT_IOU = 0.5

# 4-connectivity: edge-adjacent pixels only.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box; positive area required."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"BoundingBox.{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
            if getattr(self, name) < 0:
                raise ValueError(f"BoundingBox.{name} must be >= 0, got {v}")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError(
                f"BoundingBox must have positive area, got "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    predicted_box: Optional[BoundingBox]
    truth_box: BoundingBox
    iou: float
    hit: bool

    def __post_init__(self):
        if not 0.0 <= self.iou <= 1.0:
            raise ValueError(f"iou must be in [0, 1], got {self.iou}")
        if self.hit != (self.iou >= HIT_IOU):
            raise ValueError("hit flag inconsistent with iou >= 0.5")


def threshold_mask(amap: ActivationMap, fraction: float) -> np.ndarray:
    """Boolean mask of pixels at or above ``fraction`` of the map maximum.

    A non-positive maximum (e.g. the all-zero output of normalizing a
    constant map) yields an empty mask: nothing exceeds a positive cut.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    peak = float(amap.values.max())
    if peak <= 0.0:
        return np.zeros(amap.values.shape, dtype=bool)
    return amap.values >= fraction * peak


def largest_component_bbox(mask: np.ndarray) -> BoundingBox:
    """Tight box around the biggest 4-connected region of ``mask``.

    Size ties are broken toward the component whose first pixel comes first
    in row-major scan order.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no activated region: mask is empty")
    labels, count = ndimage.label(mask, structure=_CROSS)
    flat = labels.ravel()
    sizes = np.bincount(flat)[1:]
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first_seen, flat, np.arange(flat.size))
    best = None
    for lab in range(1, count + 1):
        key = (-sizes[lab - 1], first_seen[lab])
        if best is None or key < best[0]:
            best = (key, lab)
    rows, cols = np.nonzero(labels == best[1])
    return BoundingBox(
        x_min=int(cols.min()),
        y_min=int(rows.min()),
        x_max=int(cols.max()) + 1,
        y_max=int(rows.max()) + 1,
    )


def mask_bbox(mask: np.ndarray) -> BoundingBox:
    """Tight box around every set pixel of ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no activated region: mask is empty")
    rows, cols = np.nonzero(mask)
    return BoundingBox(
        x_min=int(cols.min()),
        y_min=int(rows.min()),
        x_max=int(cols.max()) + 1,
        y_max=int(rows.max()) + 1,
    )


def bbox_from_mask(mask: np.ndarray, mode: str = "component") -> BoundingBox:
    """Box extraction dispatcher for the ``--box-mode`` CLI switch."""
    if mode == "component":
        return largest_component_bbox(mask)
    if mode == "all":
        return mask_bbox(mask)
    raise ValueError(f"unknown box mode {mode!r}, expected 'component' or 'all'")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two half-open boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


class LocalizationSummary(NamedTuple):
    mean_iou: float
    accuracy: float
    per_episode: list[EpisodeResult]


def evaluate_episodes(
    episodes: Sequence[tuple[ActivationMap, BoundingBox]],
    fraction: float,
    box_mode: str = "component",
    ids: Sequence[str] | None = None,
) -> LocalizationSummary:
    """Score a batch of (normalized map, truth box) episodes.

    Maps must already be at annotation resolution.  Episodes whose
    thresholded mask is empty score IoU 0 and miss.  Reduction runs in
    input order so results are deterministic.
    """
    if len(episodes) == 0:
        raise ValueError("no episodes to evaluate")
    if ids is not None and len(ids) != len(episodes):
        raise ValueError(f"got {len(ids)} ids for {len(episodes)} episodes")
    results: list[EpisodeResult] = []
    for idx, (amap, truth) in enumerate(episodes):
        episode_id = ids[idx] if ids is not None else str(idx)
        mask = threshold_mask(amap, fraction)
        if mask.any():
            predicted = bbox_from_mask(mask, box_mode)
            overlap = iou(predicted, truth)
        else:
            predicted = None
            overlap = 0.0
        results.append(
            EpisodeResult(
                episode_id=episode_id,
                predicted_box=predicted,
                truth_box=truth,
                iou=overlap,
                hit=overlap >= HIT_IOU,
            )
        )
    mean_iou = float(np.mean([r.iou for r in results], dtype=np.float64))
    accuracy = float(np.mean([1.0 if r.hit else 0.0 for r in results], dtype=np.float64))
    return LocalizationSummary(mean_iou=mean_iou, accuracy=accuracy, per_episode=results)
