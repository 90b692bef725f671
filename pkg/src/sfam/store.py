"""File I/O: NPY tensors, JSON episode manifests, and heatmap overlays.

Tensor interchange is NPY format version 1.0, little-endian float32 or
float64 (float64 is narrowed to float32 on read), C-contiguous, rank 1
(embedding) or rank 3 (feature map).  Episode manifests are JSON documents
described in docs/manifest.md, schema version 1.  Overlays are 8-bit RGB
PNGs produced with a fixed 256-entry heat colormap.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .localization import BoundingBox
from .maps import ActivationMap
from .tensors import EmbeddingVector, FeatureMap

__all__ = [
    "EpisodeRecord",
    "read_tensor",
    "write_tensor",
    "write_array",
    "read_manifest",
    "render_overlay",
    "blend_heat",
    "load_image_rgb",
    "heat_lut",
]

MANIFEST_SCHEMA_VERSION = 1
METRICS = ("euclidean", "cosine")

_MAGIC = b"\x93NUMPY"
_SUPPORTED_DTYPES = ("<f4", "<f8")


@dataclass(frozen=True)
class EpisodeRecord:
    """One query / support grouping as stored in a manifest."""

    episode_id: str
    query_tensor_path: Path
    support_tensor_paths: tuple[Path, ...]
    image_size: tuple[int, int]
    metric: str
    query_image_path: Optional[Path] = None
    truth_box: Optional[BoundingBox] = None


def read_tensor(path: Union[str, Path]) -> Union[FeatureMap, EmbeddingVector]:
    """Parse an NPY v1.0 file into a feature map (rank 3) or embedding (rank 1)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, not an NPY file")
        version = fh.read(2)
        if len(version) < 2 or (version[0], version[1]) != (1, 0):
            got = f"{version[0]}.{version[1]}" if len(version) == 2 else "truncated"
            raise ValueError(f"{path}: unsupported NPY version {got}, expected 1.0")
        raw_len = fh.read(2)
        if len(raw_len) < 2:
            raise ValueError(f"{path}: truncated header length field")
        (header_len,) = struct.unpack("<H", raw_len)
        header_bytes = fh.read(header_len)
        if len(header_bytes) < header_len:
            raise ValueError(f"{path}: truncated header")
        try:
            header = ast.literal_eval(header_bytes.decode("latin1"))
        except (ValueError, SyntaxError) as exc:
            raise ValueError(f"{path}: unparsable header: {exc}") from exc
        for field in ("descr", "fortran_order", "shape"):
            if field not in header:
                raise ValueError(f"{path}: header missing field {field!r}")
        descr = header["descr"]
        if descr not in _SUPPORTED_DTYPES:
            raise ValueError(
                f"{path}: dtype {descr!r} not supported, expected one of "
                f"{_SUPPORTED_DTYPES}"
            )
        if header["fortran_order"]:
            raise ValueError(f"{path}: fortran_order is true, requires C-contiguous data")
        shape = tuple(int(d) for d in header["shape"])
        dtype = np.dtype(descr)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = fh.read(count * dtype.itemsize)
        if len(payload) < count * dtype.itemsize:
            raise ValueError(f"{path}: truncated data (shape {shape})")
        arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if arr.ndim not in (1, 3):
        raise ValueError(f"{path}: rank must be 1 or 3, got {arr.ndim}")
    arr = arr.astype(np.float32)
    try:
        if arr.ndim == 3:
            return FeatureMap(arr)
        return EmbeddingVector(arr)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def write_array(path: Union[str, Path], arr: np.ndarray) -> None:
    """Write a float32 C-order array as NPY v1.0, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, out, version=(1, 0))


def write_tensor(
    path: Union[str, Path], tensor: Union[FeatureMap, EmbeddingVector]
) -> None:
    """Store a feature map or embedding as NPY v1.0, dtype float32."""
    if not isinstance(tensor, (FeatureMap, EmbeddingVector)):
        raise TypeError(f"expected FeatureMap or EmbeddingVector, got {type(tensor)!r}")
    try:
        write_array(path, tensor.values)
    except OSError as exc:
        raise OSError(f"failed to write tensor to {path}: {exc}") from exc


def _episode_error(episode_id: str, message: str) -> ValueError:
    return ValueError(f"episode {episode_id!r}: {message}")


def _parse_box(raw, convention: str, episode_id: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise _episode_error(episode_id, f"truth_box must be [x_min, y_min, x_max, y_max], got {raw!r}")
    x_min, y_min, x_max, y_max = (int(v) for v in raw)
    if convention == "inclusive":
        x_max += 1
        y_max += 1
    try:
        return BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)
    except ValueError as exc:
        raise _episode_error(episode_id, str(exc)) from exc


def _resolve(base: Path, rel: str, episode_id: str, field: str) -> Path:
    p = Path(rel)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise _episode_error(episode_id, f"{field} does not exist: {p}")
    return p


def read_manifest(path: Union[str, Path]) -> list[EpisodeRecord]:
    """Load and validate an episode manifest.

    Accepts either the canonical object form ({"schema_version": 1,
    "episodes": [...]}) or a bare top-level array of episode objects.
    Relative tensor/image paths resolve against the manifest's directory.
    Loading is all-or-nothing: the first invalid episode aborts the load.
    """
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    default_convention = "half_open"
    if isinstance(doc, dict):
        version = doc.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ValueError(
                f"{path}: schema_version must be {MANIFEST_SCHEMA_VERSION}, got {version!r}"
            )
        episodes_json = doc.get("episodes")
        if not isinstance(episodes_json, list):
            raise ValueError(f"{path}: 'episodes' must be an array")
        default_convention = doc.get("box_convention", "half_open")
    elif isinstance(doc, list):
        episodes_json = doc
    else:
        raise ValueError(f"{path}: manifest must be a JSON array or object")

    base = path.parent
    records: list[EpisodeRecord] = []
    seen: set[str] = set()
    for idx, entry in enumerate(episodes_json):
        if not isinstance(entry, dict):
            raise ValueError(f"{path}: episode {idx} is not an object")
        episode_id = entry.get("episode_id")
        if not isinstance(episode_id, str) or not episode_id:
            raise ValueError(f"{path}: episode {idx} is missing a string 'episode_id'")
        if episode_id in seen:
            raise ValueError(f"{path}: duplicate id {episode_id!r}")
        seen.add(episode_id)

        for field in ("query_tensor_path", "support_tensor_paths", "image_size", "metric"):
            if field not in entry:
                raise _episode_error(episode_id, f"missing field {field!r}")
        query_tensor = _resolve(base, entry["query_tensor_path"], episode_id, "query_tensor_path")
        supports_raw = entry["support_tensor_paths"]
        if not isinstance(supports_raw, list) or len(supports_raw) == 0:
            raise _episode_error(episode_id, "support_tensor_paths must be a nonempty list")
        supports = tuple(
            _resolve(base, rel, episode_id, "support_tensor_paths") for rel in supports_raw
        )
        size_raw = entry["image_size"]
        if (
            not isinstance(size_raw, (list, tuple))
            or len(size_raw) != 2
            or any(int(v) < 1 for v in size_raw)
        ):
            raise _episode_error(episode_id, f"image_size must be [width, height] > 0, got {size_raw!r}")
        metric = entry["metric"]
        if metric not in METRICS:
            raise _episode_error(episode_id, f"metric must be one of {METRICS}, got {metric!r}")

        image_path = None
        if entry.get("query_image_path") is not None:
            image_path = _resolve(base, entry["query_image_path"], episode_id, "query_image_path")
        truth_box = None
        if entry.get("truth_box") is not None:
            convention = entry.get("box_convention", default_convention)
            if convention not in ("half_open", "inclusive"):
                raise _episode_error(episode_id, f"unknown box_convention {convention!r}")
            truth_box = _parse_box(entry["truth_box"], convention, episode_id)

        records.append(
            EpisodeRecord(
                episode_id=episode_id,
                query_tensor_path=query_tensor,
                support_tensor_paths=supports,
                image_size=(int(size_raw[0]), int(size_raw[1])),
                metric=metric,
                query_image_path=image_path,
                truth_box=truth_box,
            )
        )
    return records


def heat_lut() -> np.ndarray:
    """Fixed 256x3 uint8 colormap: blue -> cyan -> yellow -> red.

    Breakpoints sit at normalized values 0, 0.35, 0.66 and 1.0 with linear
    blending between them; equal inputs always produce identical RGB bytes.
    """
    stops = np.array([0.0, 0.35, 0.66, 1.0])
    colors = np.array(
        [[0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]], dtype=np.float64
    )
    grid = np.linspace(0.0, 1.0, 256)
    lut = np.stack(
        [np.interp(grid, stops, colors[:, c]) for c in range(3)], axis=1
    )
    return np.rint(lut).astype(np.uint8)


_HEAT_LUT = heat_lut()


def load_image_rgb(image_path: Union[str, Path]) -> np.ndarray:
    """Decode an image file into an (H, W, 3) uint8 array."""
    try:
        with Image.open(image_path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read image {image_path}: {exc}") from exc


def blend_heat(rgb: np.ndarray, amap: ActivationMap, alpha: float) -> np.ndarray:
    """Colorize a normalized map and alpha-blend it over an RGB array."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if rgb.shape[:2] != (amap.height, amap.width):
        raise ValueError(
            f"image size {rgb.shape[1]}x{rgb.shape[0]} does not match "
            f"map size {amap.width}x{amap.height}"
        )
    idx = np.clip(np.rint(amap.values.astype(np.float64) * 255.0), 0, 255).astype(np.intp)
    heat = _HEAT_LUT[idx].astype(np.float64)
    blended = np.rint(alpha * heat + (1.0 - alpha) * rgb.astype(np.float64))
    return np.clip(blended, 0, 255).astype(np.uint8)


def render_overlay(
    image_path: Union[str, Path],
    amap: ActivationMap,
    out_path: Union[str, Path],
    alpha: float = 0.5,
) -> None:
    """Blend the colorized map over the image and write a PNG.

    ``amap`` must be normalized to [0, 1] and already upsampled to the
    image's resolution.  Blending is alpha * heat + (1 - alpha) * image.
    """
    out = blend_heat(load_image_rgb(image_path), amap, alpha)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(out, mode="RGB").save(out_path, format="PNG")
