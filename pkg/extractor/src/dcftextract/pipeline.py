"""Image -> DCFT extraction pipeline.

ExtractorSpec carries every knob that affects the output bytes; the
pipeline functions are deterministic given (image file, spec). Per-file
noise is seeded from the user seed plus a hash of the file name, so a
batch is reproducible file by file while no two files share a noise draw.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import backends
from .backends import CAPTURE_POINTS, DOWNSAMPLE, encoder_family
from .container import write_container, write_sidecar
from .errors import ImageUnreadable


@dataclass(frozen=True)
class ExtractorSpec:
    """Validated extraction settings."""

    encoder_id: str
    timestep: int = 50
    prompt: str = ""
    input_size: int = 1024
    noise_seed: int = 0
    capture: str = "attn-post-residual"

    def __post_init__(self) -> None:
        encoder_family(self.encoder_id)  # raises on unknown ids
        if not 0 <= self.timestep <= 1000:
            raise ValueError(f"timestep must be in [0, 1000], got {self.timestep}")
        if self.input_size < DOWNSAMPLE or self.input_size % DOWNSAMPLE:
            raise ValueError(f"input size must be a positive multiple of "
                             f"{DOWNSAMPLE}, got {self.input_size}")
        if self.capture not in CAPTURE_POINTS:
            raise ValueError(f"capture must be one of {CAPTURE_POINTS}, "
                             f"got {self.capture!r}")


def load_image(path: str, side: int) -> np.ndarray:
    """RGB float array in [0, 1], bilinearly resized to side x side."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((side, side), Image.BILINEAR)
            return np.asarray(img, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise ImageUnreadable(f"{path}: {exc}") from exc


def _file_noise_rng(spec: ExtractorSpec, image_path: str) -> np.random.Generator:
    digest = hashlib.sha256(os.path.basename(image_path).encode()).digest()
    words = [int.from_bytes(digest[i:i + 8], "little") for i in (0, 8)]
    return np.random.default_rng([spec.noise_seed & (2**64 - 1), *words])


def extract_diffusion_features(image_path: str, spec: ExtractorSpec,
                               out_dir: str) -> str:
    """Diffusion-encoder features for one image; returns the DCFT path."""
    image = load_image(image_path, spec.input_size)
    rng = _file_noise_rng(spec, image_path)
    if spec.encoder_id == "toy-unet":
        feats = backends.toy_unet_features(image, spec.timestep, spec.prompt,
                                           rng, spec.capture)
    else:
        feats = backends._load_diffusion_features(
            backends.REAL_DIFFUSION[spec.encoder_id], image, spec.timestep,
            spec.prompt, rng, spec.capture)
    return _write_outputs(feats, image_path, spec, out_dir)


def extract_vit_features(image_path: str, spec: ExtractorSpec,
                         out_dir: str) -> str:
    """Final-layer patch tokens for one image; returns the DCFT path."""
    image = load_image(image_path, spec.input_size)
    if spec.encoder_id == "toy-vit":
        feats = backends.toy_vit_features(image, spec.capture)
    else:
        feats = backends._load_vit_features(backends.REAL_VIT[spec.encoder_id], image)
    return _write_outputs(feats, image_path, spec, out_dir)


def extract(image_path: str, spec: ExtractorSpec, out_dir: str) -> str:
    """Route one image to the family the encoder id belongs to."""
    if encoder_family(spec.encoder_id) == "diffusion":
        return extract_diffusion_features(image_path, spec, out_dir)
    return extract_vit_features(image_path, spec, out_dir)


def _write_outputs(feats: np.ndarray, image_path: str, spec: ExtractorSpec,
                   out_dir: str) -> str:
    stem = os.path.splitext(os.path.basename(image_path))[0]
    dcft_path = os.path.join(out_dir, stem + ".dcft")
    write_container(feats, dcft_path)
    write_sidecar({
        "encoder_id": spec.encoder_id,
        "family": encoder_family(spec.encoder_id),
        "timestep": spec.timestep,
        "prompt": spec.prompt,
        "input_size": spec.input_size,
        "noise_seed": spec.noise_seed,
        "capture": spec.capture,
        "source_image": os.path.basename(image_path),
        "grid": list(feats.shape[:2]),
        "dim": int(feats.shape[2]),
    }, os.path.join(out_dir, stem + ".json"))
    return dcft_path
