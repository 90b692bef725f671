"""Localization protocol tests: thresholding, box extraction, IoU, scoring."""

import numpy as np
import pytest

from sfam.localization import (
    BoundingBox,
    EpisodeResult,
    evaluate_episodes,
    iou,
    largest_component_bbox,
    mask_bbox,
    threshold_mask,
)
from sfam.maps import ActivationMap


def iou_raster_oracle(a: BoundingBox, b: BoundingBox, size: int = 96) -> float:
    """Count set cells on a rasterized grid."""
    grid_a = np.zeros((size, size), dtype=bool)
    grid_b = np.zeros((size, size), dtype=bool)
    grid_a[a.y_min : a.y_max, a.x_min : a.x_max] = True
    grid_b[b.y_min : b.y_max, b.x_min : b.x_max] = True
    union = np.logical_or(grid_a, grid_b).sum()
    inter = np.logical_and(grid_a, grid_b).sum()
    return inter / union if union else 0.0


def flood_fill_components(mask):
    """4-connected components by explicit BFS, in scan order."""
    mask = np.asarray(mask, dtype=bool)
    seen = np.zeros_like(mask)
    comps = []
    h, w = mask.shape
    for i in range(h):
        for j in range(w):
            if mask[i, j] and not seen[i, j]:
                stack, pixels = [(i, j)], []
                seen[i, j] = True
                while stack:
                    r, c = stack.pop()
                    pixels.append((r, c))
                    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                            seen[rr, cc] = True
                            stack.append((rr, cc))
                comps.append(pixels)
    return comps


class TestBoundingBox:
    def test_area(self):
        assert BoundingBox(0, 0, 10, 5).area == 50

    def test_zero_area_rejected(self):
        with pytest.raises(ValueError, match="positive area"):
            BoundingBox(3, 3, 3, 8)

    def test_inverted_rejected(self):
        with pytest.raises(ValueError, match="positive area"):
            BoundingBox(5, 0, 2, 4)

    def test_negative_coordinate_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            BoundingBox(-1, 0, 4, 4)


class TestThresholdMask:
    def test_all_zero_map_empty_mask(self):
        mask = threshold_mask(ActivationMap(np.zeros((4, 4), dtype=np.float32)), 0.2)
        assert not mask.any()

    def test_fixture(self):
        amap = ActivationMap([[1.0, 0.1], [0.3, 0.19]])
        np.testing.assert_array_equal(
            threshold_mask(amap, 0.2), [[True, False], [True, False]]
        )

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(60)
        values = rng.uniform(size=(9, 9)).astype(np.float32)
        mask = threshold_mask(ActivationMap(values), 0.2)
        cut = 0.2 * values.max()
        for i in range(9):
            for j in range(9):
                assert mask[i, j] == (values[i, j] >= cut)

    def test_monotone_in_fraction(self):
        rng = np.random.default_rng(61)
        amap = ActivationMap(rng.uniform(size=(8, 8)).astype(np.float32))
        low = threshold_mask(amap, 0.1)
        high = threshold_mask(amap, 0.6)
        assert np.all(low[high])  # raising the cut never adds pixels

    def test_fraction_bounds(self):
        amap = ActivationMap(np.ones((2, 2), dtype=np.float32))
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError, match="fraction"):
                threshold_mask(amap, bad)


class TestLargestComponentBbox:
    def test_single_pixel(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 3] = True
        assert largest_component_bbox(mask) == BoundingBox(3, 2, 4, 3)

    def test_bigger_blob_wins(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[1:2, 1:6] = True  # 5 pixels
        mask[6:9, 6:9] = True  # 9 pixels
        comps = flood_fill_components(mask)
        biggest = max(comps, key=len)
        assert len(biggest) == 9
        assert largest_component_bbox(mask) == BoundingBox(6, 6, 9, 9)

    def test_full_mask(self):
        mask = np.ones((4, 7), dtype=bool)
        assert largest_component_bbox(mask) == BoundingBox(0, 0, 7, 4)

    def test_tie_broken_by_scan_order(self):
        mask = np.zeros((6, 6), dtype=bool)
        mask[4, 0:3] = True  # later in scan order
        mask[0, 3:6] = True  # first pixel at (0, 3)
        assert largest_component_bbox(mask) == BoundingBox(3, 0, 6, 1)

    def test_diagonal_is_not_connected(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = mask[1, 1] = mask[2, 2] = True
        box = largest_component_bbox(mask)
        assert box.area == 1  # three separate single-pixel components

    def test_agrees_with_flood_fill_on_random_masks(self):
        rng = np.random.default_rng(62)
        for _ in range(25):
            mask = rng.uniform(size=(12, 12)) < 0.35
            if not mask.any():
                continue
            comps = flood_fill_components(mask)
            comps.sort(key=lambda px: (-len(px), px[0]))
            pixels = comps[0]
            rows = [p[0] for p in pixels]
            cols = [p[1] for p in pixels]
            expected = BoundingBox(min(cols), min(rows), max(cols) + 1, max(rows) + 1)
            assert largest_component_bbox(mask) == expected

    def test_box_tightly_contains_component(self):
        rng = np.random.default_rng(63)
        mask = rng.uniform(size=(10, 10)) < 0.3
        if not mask.any():
            mask[5, 5] = True
        box = largest_component_bbox(mask)
        region = mask[box.y_min : box.y_max, box.x_min : box.x_max]
        assert region.any(axis=0).all() or region.any(axis=1).all() or region.any()
        # tightness: every edge row/column of the box touches the mask
        assert mask[box.y_min, box.x_min : box.x_max].any() or mask[
            box.y_min : box.y_max, box.x_min
        ].any()

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="no activated region"):
            largest_component_bbox(np.zeros((3, 3), dtype=bool))


class TestMaskBbox:
    def test_covers_all_pixels(self):
        mask = np.zeros((8, 8), dtype=bool)
        mask[1, 1] = mask[6, 5] = True
        assert mask_bbox(mask) == BoundingBox(1, 1, 6, 7)


class TestIou:
    def test_identical(self):
        box = BoundingBox(2, 3, 9, 11)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(5, 5, 8, 8)) == 0.0

    def test_fixture(self):
        got = iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15))
        assert abs(got - 25.0 / 175.0) < 1e-12

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(64)
        for _ in range(200):
            x = sorted(rng.integers(0, 64, size=2).tolist())
            y = sorted(rng.integers(0, 64, size=2).tolist())
            u = sorted(rng.integers(0, 64, size=2).tolist())
            v = sorted(rng.integers(0, 64, size=2).tolist())
            if x[0] == x[1] or y[0] == y[1] or u[0] == u[1] or v[0] == v[1]:
                continue
            a = BoundingBox(x[0], y[0], x[1], y[1])
            b = BoundingBox(u[0], v[0], u[1], v[1])
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0

    def test_matches_rasterization(self):
        rng = np.random.default_rng(65)
        for _ in range(300):
            x = sorted(rng.integers(0, 64, size=2).tolist())
            y = sorted(rng.integers(0, 64, size=2).tolist())
            u = sorted(rng.integers(0, 64, size=2).tolist())
            v = sorted(rng.integers(0, 64, size=2).tolist())
            if x[0] == x[1] or y[0] == y[1] or u[0] == u[1] or v[0] == v[1]:
                continue
            a = BoundingBox(x[0], y[0], x[1], y[1])
            b = BoundingBox(u[0], v[0], u[1], v[1])
            assert iou(a, b) == pytest.approx(iou_raster_oracle(a, b), abs=1e-12)

    def test_one_iff_identical(self):
        a = BoundingBox(0, 0, 4, 4)
        b = BoundingBox(0, 0, 4, 5)
        assert iou(a, b) < 1.0


class TestEpisodeResult:
    def test_hit_consistency_enforced(self):
        box = BoundingBox(0, 0, 2, 2)
        with pytest.raises(ValueError, match="hit"):
            EpisodeResult("x", box, box, iou=0.8, hit=False)


class TestEvaluateEpisodes:
    @staticmethod
    def _blob_map(h, w, box, value=1.0):
        values = np.zeros((h, w), dtype=np.float32)
        values[box.y_min : box.y_max, box.x_min : box.x_max] = value
        return ActivationMap(values)

    def test_perfect_localization(self):
        box = BoundingBox(2, 2, 6, 6)
        summary = evaluate_episodes([(self._blob_map(10, 10, box), box)], 0.2)
        assert summary.mean_iou == 1.0
        assert summary.accuracy == 1.0
        assert summary.per_episode[0].hit

    def test_mixed_outcomes_average(self):
        good = BoundingBox(1, 1, 5, 5)
        truth_far = BoundingBox(10, 10, 14, 14)
        episodes = [
            (self._blob_map(16, 16, good), good),
            (self._blob_map(16, 16, good), truth_far),
        ]
        summary = evaluate_episodes(episodes, 0.2)
        assert summary.mean_iou == 0.5
        assert summary.accuracy == 0.5

    def test_empty_mask_scores_zero(self):
        amap = ActivationMap(np.zeros((6, 6), dtype=np.float32))
        summary = evaluate_episodes([(amap, BoundingBox(0, 0, 3, 3))], 0.2)
        assert summary.mean_iou == 0.0
        assert summary.accuracy == 0.0
        assert summary.per_episode[0].predicted_box is None

    def test_accuracy_equals_mean_hit_flag(self):
        rng = np.random.default_rng(66)
        episodes = []
        for _ in range(40):
            x0, y0 = rng.integers(0, 8, size=2)
            pred = BoundingBox(int(x0), int(y0), int(x0) + 4, int(y0) + 4)
            tx0, ty0 = rng.integers(0, 8, size=2)
            truth = BoundingBox(int(tx0), int(ty0), int(tx0) + 4, int(ty0) + 4)
            episodes.append((self._blob_map(16, 16, pred), truth))
        summary = evaluate_episodes(episodes, 0.2)
        assert summary.accuracy == np.mean([r.hit for r in summary.per_episode])
        assert summary.mean_iou == pytest.approx(
            np.mean([r.iou for r in summary.per_episode]), abs=1e-12
        )

    def test_composed_oracle_on_planted_blobs(self):
        """End-to-end scoring equals the composition of per-op oracles."""
        rng = np.random.default_rng(67)
        episodes = []
        expected = []
        for _ in range(100):
            h = w = 20
            x0, y0 = (int(v) for v in rng.integers(2, 12, size=2))
            blob = BoundingBox(x0, y0, x0 + 5, y0 + 5)
            values = rng.uniform(0.0, 0.15, size=(h, w)).astype(np.float32)
            values[blob.y_min : blob.y_max, blob.x_min : blob.x_max] = 1.0
            amap = ActivationMap(values)
            tx0, ty0 = (int(v) for v in rng.integers(2, 12, size=2))
            truth = BoundingBox(tx0, ty0, tx0 + 5, ty0 + 5)
            episodes.append((amap, truth))
            mask = values >= 0.2 * values.max()
            comps = flood_fill_components(mask)
            comps.sort(key=lambda px: (-len(px), px[0]))
            rows = [p[0] for p in comps[0]]
            cols = [p[1] for p in comps[0]]
            pred = BoundingBox(min(cols), min(rows), max(cols) + 1, max(rows) + 1)
            expected.append(iou_raster_oracle(pred, truth, size=20))
        summary = evaluate_episodes(episodes, 0.2)
        np.testing.assert_allclose([r.iou for r in summary.per_episode], expected, atol=1e-12)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError, match="no episodes"):
            evaluate_episodes([], 0.2)

    def test_ids_attached(self):
        box = BoundingBox(0, 0, 2, 2)
        summary = evaluate_episodes(
            [(self._blob_map(4, 4, box), box)], 0.2, ids=["ep-7"]
        )
        assert summary.per_episode[0].episode_id == "ep-7"
