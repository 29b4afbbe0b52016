"""Feature extraction into DCFT containers.

`pipeline` routes images through an encoder backend and writes one DCFT
file plus one JSON sidecar per image; `container` owns the byte format;
`backends` holds the encoders (pretrained checkpoints, loaded lazily from
the local cache, and deterministic toy stand-ins for offline work).
"""

from .backends import CAPTURE_POINTS, add_schedule_noise, encoder_family
from .container import read_container, write_container, write_sidecar
from .errors import BadContainer, ExtractError, ImageUnreadable, WeightsUnavailable
from .pipeline import (
    ExtractorSpec,
    extract,
    extract_diffusion_features,
    extract_vit_features,
    load_image,
)

__version__ = "0.1.0"

__all__ = [
    "BadContainer",
    "CAPTURE_POINTS",
    "ExtractError",
    "ExtractorSpec",
    "ImageUnreadable",
    "WeightsUnavailable",
    "add_schedule_noise",
    "encoder_family",
    "extract",
    "extract_diffusion_features",
    "extract_vit_features",
    "load_image",
    "read_container",
    "write_container",
    "write_sidecar",
]
