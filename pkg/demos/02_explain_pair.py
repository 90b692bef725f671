"""
Explaining one query / support pair end to end
==============================================

A synthetic episode plants a Gaussian blob on one channel that behaves the
same in both images.  The pair pipeline pools the tensors, scores channels,
and combines the query's channels into a heatmap that peaks on the planted
blob; the heatmap is then upsampled to image resolution and rendered as a
PNG overlay.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from sfam import explain_pair, normalize_map, render_overlay, upsample_bilinear
from sfam.synthetic import planted_episode

out_dir = Path("demo_output")
out_dir.mkdir(exist_ok=True)

rng = np.random.default_rng(5)
episode = planted_episode(rng)
print(f"planted channel: {episode.shared_channel}, feature-grid center: {episode.query_center}")

result = explain_pair(episode.query, list(episode.supports), metric="euclidean")
print(f"similarity (distance to prototype): {result.similarity:.4f}")
print(f"weight of the planted channel: {result.weights.values[episode.shared_channel]:.4f}")

# image-resolution heatmap: upsample with half-pixel centers, then stretch to [0, 1]
width, height = episode.image_size
heat = normalize_map(upsample_bilinear(result.query_map, height, width))
peak = np.unravel_index(np.argmax(heat.values), heat.values.shape)
print(f"heatmap peak at image pixel (row, col) = {peak}")
print(f"annotated box: {episode.truth_box}")

# render over a flat gray backdrop (a real run would use the query photo)
backdrop = out_dir / "backdrop.png"
Image.fromarray(np.full((height, width, 3), 64, dtype=np.uint8)).save(backdrop)
render_overlay(backdrop, heat, out_dir / "explained_pair.png", alpha=0.5)
print(f"overlay written to {out_dir / 'explained_pair.png'}")
