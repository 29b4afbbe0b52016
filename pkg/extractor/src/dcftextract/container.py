"""DCFT container writing (and reading, for verification).

Layout, little-endian throughout:

    bytes 0-3   magic "DCFT"
    u32         version (1)
    u32 x3      H, W, D
    u32         dtype code (0 = float32)
    payload     H*W*D little-endian float32, row-major, channel-last

The 24-byte header is followed immediately by the payload. Writes go
through a temp file and an atomic rename so a crashed run never leaves a
half-written container behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import BadContainer

MAGIC = b"DCFT"
VERSION = 1
DTYPE_FLOAT32 = 0
HEADER = struct.Struct("<4sIIIII")


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".dcft-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_container(features: np.ndarray, path: str) -> None:
    """Write an H x W x D float feature grid as a DCFT file."""
    arr = np.asarray(features)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"features must be H x W x D with positive dims, got {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(arr).all():
        raise ValueError("features contain NaN or infinity")
    h, w, d = arr.shape
    header = HEADER.pack(MAGIC, VERSION, h, w, d, DTYPE_FLOAT32)
    _atomic_write(path, header + arr.tobytes())


def read_container(path: str) -> np.ndarray:
    """Read a DCFT file back; used to verify our own outputs."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER.size:
        raise BadContainer(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, h, w, d, code = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadContainer(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise BadContainer(f"{path}: unsupported version {version}")
    if code != DTYPE_FLOAT32:
        raise BadContainer(f"{path}: unsupported dtype code {code}")
    expected = HEADER.size + h * w * d * 4
    if len(blob) != expected:
        raise BadContainer(f"{path}: expected {expected} bytes, found {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f4", offset=HEADER.size)
    return flat.reshape(h, w, d).copy()


def write_sidecar(doc: dict, path: str) -> None:
    """JSON sidecar next to a container, atomically, with sorted keys."""
    _atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
