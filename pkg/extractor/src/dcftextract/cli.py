"""`extract`: images in, DCFT containers + JSON sidecars out."""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from .backends import CAPTURE_POINTS
from .errors import ExtractError
from .pipeline import ExtractorSpec, extract

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


def _list_images(path: str) -> list[str]:
    if os.path.isdir(path):
        found = [os.path.join(path, name) for name in sorted(os.listdir(path))
                 if name.lower().endswith(IMAGE_EXTS)]
        if not found:
            raise ExtractError(f"no images under {path}")
        return found
    return [path]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Dump per-patch encoder features into DCFT containers.")
    parser.add_argument("images", help="an image file or a directory of images")
    parser.add_argument("--encoder", required=True,
                        help="encoder id (toy-unet, toy-vit, or a known checkpoint)")
    parser.add_argument("--timestep", type=int, default=50,
                        help="schedule noise level for diffusion encoders")
    parser.add_argument("--prompt", type=str, default="",
                        help="conditioning text; empty is the canonical setting")
    parser.add_argument("--size", type=int, default=1024,
                        help="square working resolution in pixels")
    parser.add_argument("--seed", type=int, default=0,
                        help="noise seed; each file also folds in its name hash")
    parser.add_argument("--capture", choices=list(CAPTURE_POINTS),
                        default="attn-post-residual",
                        help="which tensor of the final attention block to keep")
    parser.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExtractorSpec(encoder_id=args.encoder, timestep=args.timestep,
                             prompt=args.prompt, input_size=args.size,
                             noise_seed=args.seed, capture=args.capture)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    try:
        images = _list_images(args.images)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    failures = []
    for image_path in images:
        try:
            extract(image_path, spec, args.out)
        except ExtractError as exc:
            failures.append((image_path, exc))
    for image_path, exc in failures:
        print(f"error: {image_path}: {exc}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
