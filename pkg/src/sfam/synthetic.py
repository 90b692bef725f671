"""Synthetic planted-blob episodes with analytically known ground truth.

Each episode plants one Gaussian blob on a channel that behaves identically
in the query and support tensors (equal pooled activation), while the other
channels carry "distractor" blobs whose pooled activations differ between
the two tensors by a nearly constant offset.  Channel importance scoring
therefore assigns (near-)maximal weight to the shared channel and
(near-)zero weight to distractors, so the assembled heatmap should recover
the planted blob; the generator records the blob's threshold-level bounding
box in image coordinates as the episode's ground truth.

Construction details that make the algebra exact:

* every blob is normalized to a fixed mass, so a channel's pooled mean is
  amplitude * mass / pixels regardless of blob position or border clipping;
* distractor amplitudes are swapped between query and support in pairs, so
  both tensors hold the same amplitude multiset (equal embedding norms,
  which makes the construction behave identically under the Euclidean and
  cosine metrics);
* one "decoy" distractor keeps equal amplitude on both sides (it earns a
  top importance weight, like the shared channel) but at half the shared
  amplitude, so its thresholded region stays strictly smaller than the
  planted one - a deliberate stress on largest-component box extraction.

Single-image weighting (the RAM baseline) sees only the query amplitudes,
where the shared channel sits mid-range; its heatmaps peak on the brightest
distractor instead of the planted blob.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .localization import BoundingBox
from .store import MANIFEST_SCHEMA_VERSION, write_tensor
from .tensors import FeatureMap

__all__ = [
    "PlantedEpisode",
    "planted_episode",
    "feature_disk_to_image_box",
    "write_episode_dataset",
]

SHARED_MARGIN = 2  # planted-blob centers stay this far from the grid border
DISTRACTOR_MARGIN = 2.0
MIN_SEPARATION = 3.5  # distractor blobs keep this distance from the planted one
SHARED_AMPLITUDE = 1.0
DECOY_AMPLITUDE = 0.35
PAIR_LOW_RANGE = (0.7, 0.9)
PAIR_OFFSET = 0.8
PAIR_OFFSET_JITTER = 0.005
PIXEL_NOISE = 0.002


@dataclass(frozen=True)
class PlantedEpisode:
    query: FeatureMap
    supports: tuple[FeatureMap, ...]
    truth_box: BoundingBox
    image_size: tuple[int, int]
    metric: str
    shared_channel: int
    query_center: tuple[int, int]


def feature_disk_to_image_box(
    center_rc: tuple[float, float],
    radius: float,
    grid_size: int,
    image_size: tuple[int, int],
) -> BoundingBox:
    """Image-pixel box covering a disk given in feature-grid coordinates.

    Uses the half-pixel-center mapping of the upsampler: image pixel i on an
    axis of length L samples feature coordinate (i + 0.5) * G / L - 0.5.
    """
    width, height = image_size
    row, col = center_rc

    def axis_span(c: float, length: int) -> tuple[int, int]:
        scale = length / grid_size
        lo = math.ceil(scale * (c - radius + 0.5) - 0.5)
        hi = math.floor(scale * (c + radius + 0.5) - 0.5) + 1
        return max(lo, 0), min(hi, length)

    y_min, y_max = axis_span(row, height)
    x_min, x_max = axis_span(col, width)
    return BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def _unit_mass_blob(grid_size: int, center: tuple[float, float], sigma: float) -> np.ndarray:
    rr, cc = np.mgrid[0:grid_size, 0:grid_size].astype(np.float64)
    g = np.exp(-((rr - center[0]) ** 2 + (cc - center[1]) ** 2) / (2.0 * sigma**2))
    return g * (2.0 * math.pi * sigma**2 / g.sum())


def _shared_center(rng: np.random.Generator, grid_size: int) -> tuple[int, int]:
    # Integer positions on the border ring of the admissible square, which
    # guarantees distractors always have room at MIN_SEPARATION.
    lo = SHARED_MARGIN
    hi = grid_size - 1 - SHARED_MARGIN
    ring = [
        (r, c)
        for r in range(lo, hi + 1)
        for c in range(lo, hi + 1)
        if r in (lo, hi) or c in (lo, hi)
    ]
    return ring[int(rng.integers(len(ring)))]


def _distractor_center(
    rng: np.random.Generator, grid_size: int, avoid: tuple[float, float]
) -> tuple[float, float]:
    lo = DISTRACTOR_MARGIN
    hi = grid_size - 1 - DISTRACTOR_MARGIN
    for _ in range(10_000):
        r = rng.uniform(lo, hi)
        c = rng.uniform(lo, hi)
        if math.hypot(r - avoid[0], c - avoid[1]) >= MIN_SEPARATION:
            return (r, c)
    raise RuntimeError("could not place a distractor blob away from the planted one")


def _render(
    rng: np.random.Generator,
    grid_size: int,
    sigma: float,
    amplitudes: np.ndarray,
    shared_channel: int,
    shared_center: tuple[int, int],
) -> np.ndarray:
    channels = amplitudes.shape[0]
    out = np.empty((channels, grid_size, grid_size), dtype=np.float64)
    for ch in range(channels):
        if ch == shared_channel:
            center = shared_center
        else:
            center = _distractor_center(rng, grid_size, shared_center)
        out[ch] = amplitudes[ch] * _unit_mass_blob(grid_size, center, sigma)
        out[ch] += rng.uniform(0.0, PIXEL_NOISE, size=(grid_size, grid_size))
    return out


def planted_episode(
    rng: np.random.Generator,
    channels: int = 16,
    grid_size: int = 10,
    image_size: tuple[int, int] = (80, 80),
    shots: int = 1,
    metric: str = "euclidean",
    threshold: float = 0.2,
    sigma: float = 0.9,
) -> PlantedEpisode:
    """Generate one episode; ``rng`` fully determines the outcome."""
    if channels < 4:
        raise ValueError("planted episodes need at least 4 channels")
    shared = int(rng.integers(channels))
    others = [c for c in range(channels) if c != shared]
    perm = rng.permutation(len(others))
    others = [others[i] for i in perm]
    decoy = others[0]
    paired = others[1:]
    if len(paired) % 2 == 1:
        # odd distractor count: the decoy absorbs nothing, drop one channel
        # into a self-pair by leaving it equal on both sides at low amplitude
        extra = paired.pop()
    else:
        extra = None

    amps_q = np.zeros(channels)
    amps_s = np.zeros(channels)
    amps_q[shared] = amps_s[shared] = SHARED_AMPLITUDE
    amps_q[decoy] = amps_s[decoy] = DECOY_AMPLITUDE
    if extra is not None:
        amps_q[extra] = amps_s[extra] = DECOY_AMPLITUDE
    for a, b in zip(paired[0::2], paired[1::2]):
        low = rng.uniform(*PAIR_LOW_RANGE)
        high = low + PAIR_OFFSET * (1.0 + PAIR_OFFSET_JITTER * (rng.random() - 0.5))
        if rng.random() < 0.5:
            a, b = b, a
        amps_q[a], amps_q[b] = low, high
        amps_s[a], amps_s[b] = high, low

    q_center = _shared_center(rng, grid_size)
    query = FeatureMap(
        _render(rng, grid_size, sigma, amps_q, shared, q_center).astype(np.float32)
    )
    supports = []
    for _ in range(shots):
        s_center = _shared_center(rng, grid_size)
        supports.append(
            FeatureMap(
                _render(rng, grid_size, sigma, amps_s, shared, s_center).astype(np.float32)
            )
        )
    radius = sigma * math.sqrt(2.0 * math.log(1.0 / threshold))
    truth = feature_disk_to_image_box(q_center, radius, grid_size, image_size)
    return PlantedEpisode(
        query=query,
        supports=tuple(supports),
        truth_box=truth,
        image_size=image_size,
        metric=metric,
        shared_channel=shared,
        query_center=q_center,
    )


def write_episode_dataset(
    out_dir: Path | str,
    n_episodes: int,
    seed: int,
    with_truth: bool = True,
    **episode_kwargs,
) -> Path:
    """Materialize episodes as NPY tensors plus a manifest; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for idx in range(n_episodes):
        episode = planted_episode(rng, **episode_kwargs)
        episode_id = f"episode-{idx:04d}"
        qpath = f"{episode_id}/query.npy"
        write_tensor(out_dir / qpath, episode.query)
        spaths = []
        for k, sup in enumerate(episode.supports):
            spath = f"{episode_id}/support-{k}.npy"
            write_tensor(out_dir / spath, sup)
            spaths.append(spath)
        entry = {
            "episode_id": episode_id,
            "query_tensor_path": qpath,
            "support_tensor_paths": spaths,
            "image_size": list(episode.image_size),
            "metric": episode.metric,
        }
        if with_truth:
            b = episode.truth_box
            entry["truth_box"] = [b.x_min, b.y_min, b.x_max, b.y_max]
        entries.append(entry)
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(
            {"schema_version": MANIFEST_SCHEMA_VERSION, "episodes": entries},
            fh,
            indent=2,
            sort_keys=True,
        )
    return manifest_path
