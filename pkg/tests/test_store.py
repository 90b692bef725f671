"""Tensor file format, manifest loading, and overlay rendering tests."""

import json

import numpy as np
import pytest
from PIL import Image

from sfam.localization import BoundingBox
from sfam.maps import ActivationMap
from sfam.store import (
    heat_lut,
    read_manifest,
    read_tensor,
    render_overlay,
    write_tensor,
)
from sfam.tensors import EmbeddingVector, FeatureMap


class TestTensorRoundTrip:
    def test_feature_map_bit_exact(self, tmp_path):
        rng = np.random.default_rng(90)
        fmap = FeatureMap(rng.normal(size=(5, 4, 6)).astype(np.float32))
        write_tensor(tmp_path / "t.npy", fmap)
        back = read_tensor(tmp_path / "t.npy")
        assert isinstance(back, FeatureMap)
        np.testing.assert_array_equal(back.values, fmap.values)

    def test_embedding_bit_exact(self, tmp_path):
        v = EmbeddingVector(np.array([1.25, -3.5, 0.1], dtype=np.float32))
        write_tensor(tmp_path / "v.npy", v)
        back = read_tensor(tmp_path / "v.npy")
        assert isinstance(back, EmbeddingVector)
        np.testing.assert_array_equal(back.values, v.values)

    def test_creates_missing_directories(self, tmp_path):
        v = EmbeddingVector([1.0, 2.0])
        target = tmp_path / "a" / "b" / "v.npy"
        write_tensor(target, v)
        assert target.exists()

    def test_written_files_are_npy_v1(self, tmp_path):
        write_tensor(tmp_path / "v.npy", EmbeddingVector([1.0, 2.0]))
        raw = (tmp_path / "v.npy").read_bytes()
        assert raw[:6] == b"\x93NUMPY"
        assert raw[6:8] == bytes([1, 0])

    def test_numpy_native_files_parse(self, tmp_path):
        arr = np.random.default_rng(91).normal(size=(3, 2, 2)).astype(np.float32)
        np.save(tmp_path / "native.npy", arr)
        back = read_tensor(tmp_path / "native.npy")
        np.testing.assert_array_equal(back.values, arr)


class TestTensorValidation:
    def test_float64_narrowed(self, tmp_path):
        arr = np.random.default_rng(92).normal(size=(2, 3, 3))
        np.save(tmp_path / "f8.npy", arr)
        back = read_tensor(tmp_path / "f8.npy")
        assert back.values.dtype == np.float32
        np.testing.assert_allclose(back.values, arr.astype(np.float32))

    def test_fortran_order_rejected(self, tmp_path):
        arr = np.asfortranarray(np.random.default_rng(93).normal(size=(2, 3, 4)).astype(np.float32))
        np.save(tmp_path / "f.npy", arr)
        with pytest.raises(ValueError, match="C-contiguous"):
            read_tensor(tmp_path / "f.npy")

    def test_rank_two_rejected(self, tmp_path):
        np.save(tmp_path / "m.npy", np.zeros((3, 3), dtype=np.float32))
        with pytest.raises(ValueError, match="rank must be 1 or 3"):
            read_tensor(tmp_path / "m.npy")

    def test_integer_dtype_rejected(self, tmp_path):
        np.save(tmp_path / "i.npy", np.zeros((2, 2, 2), dtype=np.int32))
        with pytest.raises(ValueError, match="dtype"):
            read_tensor(tmp_path / "i.npy")

    def test_big_endian_rejected(self, tmp_path):
        np.save(tmp_path / "be.npy", np.zeros((2, 2, 2), dtype=">f4"))
        with pytest.raises(ValueError, match="dtype"):
            read_tensor(tmp_path / "be.npy")

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "junk.npy").write_bytes(b"NOTNPYDATA" * 10)
        with pytest.raises(ValueError, match="magic"):
            read_tensor(tmp_path / "junk.npy")

    def test_newer_version_rejected(self, tmp_path):
        arr = np.zeros(4, dtype=np.float32)
        with open(tmp_path / "v2.npy", "wb") as fh:
            np.lib.format.write_array(fh, arr, version=(2, 0))
        with pytest.raises(ValueError, match="version"):
            read_tensor(tmp_path / "v2.npy")

    def test_nan_payload_rejected_with_path(self, tmp_path):
        arr = np.zeros((2, 2, 2), dtype=np.float32)
        arr[0, 0, 0] = np.nan
        np.save(tmp_path / "nan.npy", arr)
        with pytest.raises(ValueError, match="nan.npy.*finite"):
            read_tensor(tmp_path / "nan.npy")

    def test_embedding_length_one_rejected(self, tmp_path):
        np.save(tmp_path / "one.npy", np.zeros(1, dtype=np.float32))
        with pytest.raises(ValueError, match="at least 2"):
            read_tensor(tmp_path / "one.npy")


def _write_tensors(tmp_path):
    fmap = FeatureMap(np.ones((2, 3, 3), dtype=np.float32))
    write_tensor(tmp_path / "q.npy", fmap)
    write_tensor(tmp_path / "s.npy", fmap)
    return fmap


def _minimal_entry(**overrides):
    entry = {
        "episode_id": "ep-0",
        "query_tensor_path": "q.npy",
        "support_tensor_paths": ["s.npy"],
        "image_size": [24, 24],
        "metric": "euclidean",
    }
    entry.update(overrides)
    return entry


def _write_manifest(tmp_path, episodes, top_level=None):
    doc = {"schema_version": 1, "episodes": episodes}
    if top_level:
        doc.update(top_level)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


class TestReadManifest:
    def test_minimal_manifest(self, tmp_path):
        _write_tensors(tmp_path)
        records = read_manifest(_write_manifest(tmp_path, [_minimal_entry()]))
        assert len(records) == 1
        rec = records[0]
        assert rec.episode_id == "ep-0"
        assert rec.query_tensor_path == tmp_path / "q.npy"
        assert rec.image_size == (24, 24)
        assert rec.truth_box is None

    def test_bare_array_form_accepted(self, tmp_path):
        _write_tensors(tmp_path)
        path = tmp_path / "bare.json"
        path.write_text(json.dumps([_minimal_entry()]))
        assert len(read_manifest(path)) == 1

    def test_truth_box_half_open(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry(truth_box=[2, 3, 10, 12])
        records = read_manifest(_write_manifest(tmp_path, [entry]))
        assert records[0].truth_box == BoundingBox(2, 3, 10, 12)

    def test_inclusive_convention_increments_extents(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry(truth_box=[2, 3, 10, 12], box_convention="inclusive")
        records = read_manifest(_write_manifest(tmp_path, [entry]))
        assert records[0].truth_box == BoundingBox(2, 3, 11, 13)

    def test_top_level_convention_applies(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry(truth_box=[0, 0, 4, 4])
        path = _write_manifest(tmp_path, [entry], top_level={"box_convention": "inclusive"})
        assert read_manifest(path)[0].truth_box == BoundingBox(0, 0, 5, 5)

    def test_duplicate_id_rejected(self, tmp_path):
        _write_tensors(tmp_path)
        path = _write_manifest(tmp_path, [_minimal_entry(), _minimal_entry()])
        with pytest.raises(ValueError, match="duplicate id"):
            read_manifest(path)

    def test_missing_field_names_episode(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry()
        del entry["metric"]
        with pytest.raises(ValueError, match="ep-0.*metric"):
            read_manifest(_write_manifest(tmp_path, [entry]))

    def test_missing_tensor_file_names_episode(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry(query_tensor_path="absent.npy")
        with pytest.raises(ValueError, match="ep-0.*absent.npy"):
            read_manifest(_write_manifest(tmp_path, [entry]))

    def test_nonpositive_box_rejected(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry(truth_box=[5, 5, 5, 9])
        with pytest.raises(ValueError, match="ep-0"):
            read_manifest(_write_manifest(tmp_path, [entry]))

    def test_empty_supports_rejected(self, tmp_path):
        _write_tensors(tmp_path)
        entry = _minimal_entry(support_tensor_paths=[])
        with pytest.raises(ValueError, match="nonempty"):
            read_manifest(_write_manifest(tmp_path, [entry]))

    def test_unknown_schema_version_rejected(self, tmp_path):
        _write_tensors(tmp_path)
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"schema_version": 9, "episodes": []}))
        with pytest.raises(ValueError, match="schema_version"):
            read_manifest(path)

    def test_order_preserved(self, tmp_path):
        _write_tensors(tmp_path)
        entries = [_minimal_entry(episode_id=f"ep-{i}") for i in range(5)]
        records = read_manifest(_write_manifest(tmp_path, entries))
        assert [r.episode_id for r in records] == [f"ep-{i}" for i in range(5)]


class TestRenderOverlay:
    @staticmethod
    def _base_image(tmp_path, size=(8, 6), value=100):
        path = tmp_path / "img.png"
        arr = np.full((size[1], size[0], 3), value, dtype=np.uint8)
        Image.fromarray(arr).save(path)
        return path, arr

    def test_zero_map_tints_blue(self, tmp_path):
        path, arr = self._base_image(tmp_path)
        amap = ActivationMap(np.zeros((6, 8), dtype=np.float32))
        out = tmp_path / "out.png"
        render_overlay(path, amap, out, alpha=0.5)
        rendered = np.asarray(Image.open(out))
        expected = np.rint(0.5 * np.array([0, 0, 255]) + 0.5 * arr[0, 0]).astype(np.uint8)
        assert np.all(rendered == expected)

    def test_ones_map_tints_red(self, tmp_path):
        path, arr = self._base_image(tmp_path)
        amap = ActivationMap(np.ones((6, 8), dtype=np.float32))
        out = tmp_path / "out.png"
        render_overlay(path, amap, out, alpha=0.5)
        rendered = np.asarray(Image.open(out))
        expected = np.rint(0.5 * np.array([255, 0, 0]) + 0.5 * arr[0, 0]).astype(np.uint8)
        assert np.all(rendered == expected)

    def test_alpha_zero_preserves_image(self, tmp_path):
        path, arr = self._base_image(tmp_path)
        rng = np.random.default_rng(94)
        amap = ActivationMap(rng.uniform(size=(6, 8)).astype(np.float32))
        out = tmp_path / "out.png"
        render_overlay(path, amap, out, alpha=0.0)
        rendered = np.asarray(Image.open(out))
        np.testing.assert_array_equal(rendered, arr)

    def test_size_mismatch_rejected(self, tmp_path):
        path, _ = self._base_image(tmp_path)
        amap = ActivationMap(np.zeros((4, 4), dtype=np.float32))
        with pytest.raises(ValueError, match="does not match"):
            render_overlay(path, amap, tmp_path / "out.png")

    def test_unreadable_image_rejected(self, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"not a png at all")
        amap = ActivationMap(np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="cannot read image"):
            render_overlay(bad, amap, tmp_path / "out.png")


class TestHeatLut:
    def test_shape_and_breakpoints(self):
        lut = heat_lut()
        assert lut.shape == (256, 3)
        assert lut.dtype == np.uint8
        np.testing.assert_array_equal(lut[0], [0, 0, 255])
        np.testing.assert_array_equal(lut[255], [255, 0, 0])
        # interior breakpoints land within one quantization step
        assert np.all(np.abs(lut[round(0.35 * 255)].astype(int) - [0, 255, 255]) <= 3)
        assert np.all(np.abs(lut[round(0.66 * 255)].astype(int) - [255, 255, 0]) <= 3)

    def test_pure_function(self):
        np.testing.assert_array_equal(heat_lut(), heat_lut())
