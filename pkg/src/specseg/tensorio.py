"""Dense feature tensors, label maps, and their on-disk forms.

The engine consumes patch-level feature maps through a deliberately tiny
binary container (magic ``DCFT``, version 1) so that feature extractors in
any language can produce them without a serialization library:

======  ====  =========================================
offset  size  meaning
======  ====  =========================================
0       4     ASCII magic ``DCFT``
4       4     u32 little-endian version, currently 1
8       4     u32 little-endian height (patch rows)
12      4     u32 little-endian width (patch cols)
16      4     u32 little-endian dim (channels)
20      4     u32 little-endian dtype code, 0 = float32
24      ...   height*width*dim float32 little-endian,
              row-major, channel-last
======  ====  =========================================

An optional JSON sidecar at ``<path>.json`` records how the features were
produced (encoder id, timestep, prompt, source image path and size). Its
absence is never an error.

Ground-truth and predicted segmentations travel as single-channel 8- or
16-bit grayscale PNG label maps; the writer always emits 16-bit. Pixels
equal to ``ignore_index`` (default 255) are excluded from evaluation.

All writers are atomic: content is staged to a temporary file in the target
directory and moved into place with ``os.replace``, so concurrent readers
never observe a half-written file and re-runs are byte-identical.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .errors import (
    BadMagic,
    IoFailure,
    NonFiniteValue,
    TruncatedPayload,
    UnsupportedPng,
    UnsupportedVersion,
)

MAGIC = b"DCFT"
VERSION = 1
DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sIIIII")  # magic, version, height, width, dim, dtype

DEFAULT_IGNORE_INDEX = 255


@dataclass(frozen=True)
class FeatureMap:
    """A height x width grid of dim-dimensional patch features (float32)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be (height, width, dim), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"feature map dimensions must all be >= 1, got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def num_patches(self) -> int:
        return self.data.shape[0] * self.data.shape[1]

    def flat(self) -> np.ndarray:
        """Features as an (n, dim) array in row-major patch order."""
        return self.data.reshape(-1, self.data.shape[2])


@dataclass(frozen=True)
class LabelMap:
    """Integer labels on a pixel grid, with a reserved ignore value."""

    labels: np.ndarray
    ignore_index: int = DEFAULT_IGNORE_INDEX

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.labels)
        if arr.ndim != 2:
            raise ValueError(f"label map must be 2-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"label map must be integer, got dtype {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() >= 2**16):
            raise ValueError("labels must fit in 16 bits")
        object.__setattr__(self, "labels", arr.astype(np.int32, copy=False))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class RunMetadata:
    """Provenance for a feature file, stored as a JSON sidecar."""

    encoder_id: str
    timestep: int
    prompt: str
    image_path: Optional[str] = None
    image_height: Optional[int] = None
    image_width: Optional[int] = None


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a same-directory temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save_features(fm: FeatureMap, path: str) -> None:
    """Serialize a feature map to the v1 container.

    Raises NonFiniteValue if the tensor contains NaN or infinity; nothing is
    written in that case.
    """
    if not np.isfinite(fm.data).all():
        raise NonFiniteValue(f"refusing to write non-finite features to {path}")
    header = _HEADER.pack(MAGIC, VERSION, fm.height, fm.width, fm.dim, DTYPE_FLOAT32)
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def load_features(path: str) -> FeatureMap:
    """Read a v1 container back into a FeatureMap.

    The payload length must agree exactly with the header dimensions; both
    short and over-long files raise TruncatedPayload, as does a header that
    declares a zero dimension.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagic(f"{path}: not a DCFT container")
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"{path}: header truncated at {len(blob)} bytes")
    _, version, height, width, dim, dtype_code = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: container version {version}, expected {VERSION}")
    if dtype_code != DTYPE_FLOAT32:
        raise UnsupportedVersion(f"{path}: dtype code {dtype_code}, expected {DTYPE_FLOAT32}")
    if min(height, width, dim) < 1:
        raise TruncatedPayload(f"{path}: header declares a zero dimension ({height}x{width}x{dim})")

    expected = height * width * dim * 4
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise TruncatedPayload(f"{path}: payload is {actual} bytes, header implies {expected}")

    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(height, width, dim)
    if not np.isfinite(data).all():
        raise NonFiniteValue(f"{path}: payload contains non-finite values")
    return FeatureMap(data.copy())


def save_metadata(md: RunMetadata, features_path: str) -> None:
    """Write the JSON sidecar next to a feature file."""
    doc = {
        "encoder_id": md.encoder_id,
        "timestep": md.timestep,
        "prompt": md.prompt,
        "image_path": md.image_path,
        "image_height": md.image_height,
        "image_width": md.image_width,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(features_path + ".json", text.encode("utf-8"))


def load_metadata(features_path: str) -> Optional[RunMetadata]:
    """Read the sidecar for a feature file; returns None when absent."""
    sidecar = features_path + ".json"
    if not os.path.exists(sidecar):
        return None
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {sidecar}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"{sidecar}: invalid JSON: {exc}") from exc
    return RunMetadata(
        encoder_id=str(doc.get("encoder_id", "")),
        timestep=int(doc.get("timestep", 0)),
        prompt=str(doc.get("prompt", "")),
        image_path=doc.get("image_path"),
        image_height=doc.get("image_height"),
        image_width=doc.get("image_width"),
    )


def save_labels(lm: LabelMap, path: str) -> None:
    """Write a label map as 16-bit grayscale PNG (atomically)."""
    arr = lm.labels.astype("<u2")
    img = Image.frombytes("I;16", (lm.width, lm.height), arr.tobytes())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_labels(path: str, ignore_index: int = DEFAULT_IGNORE_INDEX) -> LabelMap:
    """Read an 8- or 16-bit single-channel PNG as a label map.

    Indexed (palette) PNGs without alpha are accepted with the palette index
    as the label, which is how several datasets ship their annotations.
    Anything multi-channel, or a palette carrying transparency, raises
    UnsupportedPng.
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode == "P":
                if "transparency" in img.info:
                    raise UnsupportedPng(f"{path}: palette PNG with alpha is not a label map")
                arr = np.asarray(img, dtype=np.int32)
            elif mode == "L":
                arr = np.asarray(img, dtype=np.int32)
            elif mode in ("I", "I;16"):
                arr = np.asarray(img, dtype=np.int32)
                if arr.size and (arr.min() < 0 or arr.max() >= 2**16):
                    raise UnsupportedPng(f"{path}: integer PNG exceeds 16-bit label range")
            else:
                raise UnsupportedPng(f"{path}: mode {mode} is not an 8/16-bit grayscale label map")
    except UnsupportedPng:
        raise
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return LabelMap(arr, ignore_index=ignore_index)


def load_image_rgb(path: str) -> np.ndarray:
    """Read an 8-bit RGB PNG as float64 in [0, 1], shape (H, W, 3)."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "RGB":
                raise UnsupportedPng(f"{path}: expected 8-bit RGB, got mode {img.mode}")
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except UnsupportedPng:
        raise
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return arr


def save_image_rgb(arr: np.ndarray, path: str) -> None:
    """Write a float [0, 1] (H, W, 3) array as 8-bit RGB PNG (atomically)."""
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got {arr.shape}")
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
