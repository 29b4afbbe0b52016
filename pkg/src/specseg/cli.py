"""Command-line front end.

Subcommands compose the library into file-level pipelines:

* ``segment``    feature containers -> label PNGs (+ tree JSON, optional render)
* ``eval``       predicted vs ground-truth label PNGs -> mIoU report JSON
* ``sweep``      (tau, alpha) grid -> CSV of mIoU and mean segment count
* ``coherence``  features + labels -> ROC CSV and AUC on stdout
* ``autosc``     spectrum-selected segmentation -> label PNGs + gap JSON
* ``kmeans``     k-means baseline -> label PNGs

Every command is deterministic given its inputs, flags, and seed; all file
writes are atomic (temp + rename), so re-runs overwrite byte-identical
outputs and concurrent runs never interleave partial files. Directories
are paired by filename stem. The ``SPECSEG_LOG`` environment variable sets
the log level (DEBUG, INFO, ...). Exit status is 0 only if every input
file was processed; per-file failures are reported on stderr and the
remaining files still run.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autosc import DEFAULT_ALPHA_SET, DEFAULT_K_MAX, autosc_segment, kmeans_cluster
from .errors import MissingPair, SpecsegError
from .evalkit import accumulate_and_miou, coherence_auc, match_segments
from .highres import (
    DEFAULT_DILATIONS,
    DEFAULT_PAMR_ITERATIONS,
    HiResSegmentation,
    concept_upsample,
    nearest_upsample,
    pamr_refine,
)
from .ncut import (
    DEFAULT_ALPHA,
    DEFAULT_MIN_SIZE,
    DEFAULT_SPLITS,
    DEFAULT_TAU,
    SegmentationMap,
    recursive_ncut,
)
from .tensorio import (
    DEFAULT_IGNORE_INDEX,
    LabelMap,
    atomic_write_bytes,
    load_features,
    load_image_rgb,
    load_labels,
    save_image_rgb,
    save_labels,
)

log = logging.getLogger("specseg")

FEATURE_EXT = ".dcft"
UPSAMPLE_CONCEPT = "concept"
UPSAMPLE_NEAREST = "nearest"


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs shared by the segmentation commands."""

    tau: float = DEFAULT_TAU
    alpha: int = DEFAULT_ALPHA
    splits: int = DEFAULT_SPLITS
    min_size: int = DEFAULT_MIN_SIZE
    clamp: bool = True
    pamr: bool = True
    pamr_iters: int = DEFAULT_PAMR_ITERATIONS
    dilations: tuple[int, ...] = DEFAULT_DILATIONS
    upsample: str = UPSAMPLE_CONCEPT
    ignore_index: int = DEFAULT_IGNORE_INDEX
    background: Optional[int] = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"--tau must be in (0, 1), got {self.tau}")
        if self.alpha < 1:
            raise ValueError(f"--alpha must be a positive integer, got {self.alpha}")
        if self.splits < 2:
            raise ValueError(f"--splits must be >= 2, got {self.splits}")
        if self.min_size < 1:
            raise ValueError(f"--min-size must be >= 1, got {self.min_size}")
        if self.pamr_iters < 0:
            raise ValueError(f"--pamr-iters must be >= 0, got {self.pamr_iters}")
        if any(d < 1 for d in self.dilations):
            raise ValueError(f"--dilations must be positive, got {self.dilations}")
        if self.upsample not in (UPSAMPLE_CONCEPT, UPSAMPLE_NEAREST):
            raise ValueError(f"--upsample must be concept or nearest, got {self.upsample}")
        if not 0 <= self.ignore_index < 2**16:
            raise ValueError(f"--ignore-index must fit in 16 bits, got {self.ignore_index}")
        if self.jobs < 1:
            raise ValueError(f"--jobs must be >= 1, got {self.jobs}")


# ---------------------------------------------------------------------------
# render palette: 256 fixed colors from bit-interleaving the label index,
# so color assignment is stable across runs and machines (no hashing)


def render_palette() -> np.ndarray:
    pal = np.zeros((256, 3), dtype=np.uint8)
    for idx in range(256):
        r = g = b = 0
        value = idx
        for bit in range(8):
            r |= ((value >> 0) & 1) << (7 - bit)
            g |= ((value >> 1) & 1) << (7 - bit)
            b |= ((value >> 2) & 1) << (7 - bit)
            value >>= 3
        pal[idx] = (r, g, b)
    return pal


_PALETTE = render_palette()


def _render_blend(image: np.ndarray, labels: np.ndarray) -> np.ndarray:
    colors = _PALETTE[labels % 256] / 255.0
    return 0.5 * image + 0.5 * colors


# ---------------------------------------------------------------------------
# file discovery and pairing


def _list_inputs(path: str, ext: str) -> list[tuple[str, str]]:
    """(stem, path) pairs for a file or every *ext file in a directory."""
    if os.path.isdir(path):
        out = []
        for name in sorted(os.listdir(path)):
            if name.endswith(ext):
                out.append((name[: -len(ext)], os.path.join(path, name)))
        if not out:
            raise MissingPair(f"no *{ext} files under {path}")
        return out
    stem = os.path.basename(path)
    if stem.endswith(ext):
        stem = stem[: -len(ext)]
    return [(stem, path)]


def _counterpart(stem: str, path_or_dir: Optional[str], ext: str, what: str) -> Optional[str]:
    """Resolve the companion file for a stem; directories pair by stem."""
    if path_or_dir is None:
        return None
    if os.path.isdir(path_or_dir):
        candidate = os.path.join(path_or_dir, stem + ext)
        if not os.path.exists(candidate):
            raise MissingPair(f"no {what} named {stem}{ext} under {path_or_dir}")
        return candidate
    return path_or_dir


def _run_per_file(jobs: int, tasks: list[tuple[str, object]]) -> int:
    """Run (stem, thunk) tasks with a worker bound; report failures, keep going."""
    failures = []
    if jobs == 1:
        for stem, thunk in tasks:
            try:
                thunk()
            except Exception as exc:  # noqa: BLE001 - per-file isolation is the point
                failures.append((stem, exc))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(thunk): stem for stem, thunk in tasks}
            for fut in concurrent.futures.as_completed(futures):
                try:
                    fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append((futures[fut], exc))
    for stem, exc in sorted(failures, key=lambda t: t[0]):
        print(f"error: {stem}: {exc}", file=sys.stderr)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# segment


def _upsample(
    fm, seg: SegmentationMap, cfg: RunConfig, out_h: int, out_w: int
) -> HiResSegmentation:
    if (out_h, out_w) == (seg.height, seg.width):
        return HiResSegmentation(seg.labels, seg.num_segments)
    if cfg.upsample == UPSAMPLE_NEAREST:
        return nearest_upsample(seg, out_h, out_w)
    return concept_upsample(fm, seg, out_h, out_w)


def _segment_one(
    fm_path: str,
    image_path: Optional[str],
    cfg: RunConfig,
    out_dir: str,
    stem: str,
    render: bool,
    out_size: Optional[tuple[int, int]],
) -> None:
    fm = load_features(fm_path)
    seg, tree = recursive_ncut(
        fm, tau=cfg.tau, alpha=cfg.alpha, l=cfg.splits,
        min_size=cfg.min_size, clamp=cfg.clamp)
    log.info("%s: %d segments at tau=%g alpha=%d", stem, seg.num_segments, cfg.tau, cfg.alpha)

    image = load_image_rgb(image_path) if image_path else None
    if image is not None:
        out_h, out_w = image.shape[0], image.shape[1]
    elif out_size is not None:
        out_h, out_w = out_size
    else:
        out_h, out_w = seg.height, seg.width

    if out_size is not None and (out_h, out_w) == (seg.height, seg.width) \
            and cfg.upsample == UPSAMPLE_CONCEPT and image is None:
        # explicit size equal to the grid still honors the requested mode
        hires = concept_upsample(fm, seg, out_h, out_w)
    else:
        hires = _upsample(fm, seg, cfg, out_h, out_w)

    if cfg.pamr:
        if image is None:
            raise SpecsegError("PAMR needs --image (or pass --no-pamr)")
        hires = pamr_refine(image, hires, iterations=cfg.pamr_iters, dilations=cfg.dilations)

    save_labels(LabelMap(hires.labels, ignore_index=cfg.ignore_index),
                os.path.join(out_dir, stem + ".png"))
    tree_doc = json.dumps(tree.to_dict(), indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(os.path.join(out_dir, stem + "_tree.json"), tree_doc.encode())
    if render:
        if image is None:
            raise SpecsegError("--render needs --image")
        # separate subdirectory keeps the output directory usable as the
        # --pred side of eval, whose stem pairing sees every *.png
        render_dir = os.path.join(out_dir, "render")
        os.makedirs(render_dir, exist_ok=True)
        save_image_rgb(_render_blend(image, hires.labels),
                       os.path.join(render_dir, stem + ".png"))


def cmd_segment(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    os.makedirs(args.out, exist_ok=True)
    out_size = tuple(args.out_size) if args.out_size else None
    tasks = []
    for stem, fm_path in _list_inputs(args.features, FEATURE_EXT):
        image_path = _counterpart(stem, args.image, ".png", "image")
        if image_path is None and (cfg.pamr or args.render):
            raise SpecsegError("PAMR and --render need --image (or pass --no-pamr)")
        tasks.append((stem, (lambda f=fm_path, i=image_path, s=stem: _segment_one(
            f, i, cfg, args.out, s, args.render, out_size))))
    return _run_per_file(cfg.jobs, tasks)


# ---------------------------------------------------------------------------
# eval


def _load_eval_items(pred: str, gt: str, ignore_index: int, background: Optional[int]):
    items = []
    for stem, pred_path in _list_inputs(pred, ".png"):
        gt_path = _counterpart(stem, gt, ".png", "ground-truth map")
        pred_lm = load_labels(pred_path, ignore_index=ignore_index)
        gt_lm = load_labels(gt_path, ignore_index=ignore_index)
        hires = HiResSegmentation(pred_lm.labels, int(pred_lm.labels.max()) + 1)
        matching = match_segments(hires, gt_lm, background_class=background)
        items.append((hires, gt_lm, matching))
    return items


def cmd_eval(args: argparse.Namespace) -> int:
    items = _load_eval_items(args.pred, args.gt, args.ignore_index, args.background)
    report = accumulate_and_miou(items, background_class=args.background)
    doc = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(args.out, doc.encode())
    print(f"miou {report.miou:.6f} over {report.num_images} images")
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_from(args, tau_ok=False)
    taus = sorted(float(t) for t in args.tau.split(","))
    alphas = sorted(int(a) for a in args.alpha.split(","))
    if any(not 0.0 < t < 1.0 for t in taus):
        raise ValueError(f"--tau values must be in (0, 1), got {taus}")
    if any(a < 1 for a in alphas):
        raise ValueError(f"--alpha values must be positive, got {alphas}")

    pairs = []
    for stem, fm_path in _list_inputs(args.features, FEATURE_EXT):
        gt_path = _counterpart(stem, args.gt, ".png", "ground-truth map")
        pairs.append((load_features(fm_path),
                      load_labels(gt_path, ignore_index=cfg.ignore_index)))

    rows = []
    for alpha in alphas:
        for tau in taus:
            items = []
            seg_counts = []
            for fm, gt_lm in pairs:
                seg, _ = recursive_ncut(fm, tau=tau, alpha=alpha, l=cfg.splits,
                                        min_size=cfg.min_size, clamp=cfg.clamp)
                seg_counts.append(seg.num_segments)
                hires = _upsample(fm, seg, cfg, gt_lm.height, gt_lm.width)
                items.append((hires, gt_lm,
                              match_segments(hires, gt_lm, background_class=cfg.background)))
            report = accumulate_and_miou(items, background_class=cfg.background)
            rows.append((tau, alpha, report.miou, float(np.mean(seg_counts))))
            log.info("sweep tau=%g alpha=%d miou=%.4f mean_k=%.2f", *rows[-1])

    rows.sort(key=lambda r: (r[1], r[0]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau", "alpha", "miou", "mean_segments"])
    for tau, alpha, miou, mean_k in rows:
        writer.writerow([f"{tau:g}", alpha, f"{miou:.6f}", f"{mean_k:.4f}"])
    atomic_write_bytes(args.out, buf.getvalue().encode())
    return 0


# ---------------------------------------------------------------------------
# coherence


def cmd_coherence(args: argparse.Namespace) -> int:
    fms, lms = [], []
    for stem, fm_path in _list_inputs(args.features, FEATURE_EXT):
        gt_path = _counterpart(stem, args.gt, ".png", "label map")
        fms.append(load_features(fm_path))
        lms.append(load_labels(gt_path, ignore_index=args.ignore_index))
    roc = coherence_auc(fms, lms, num_pairs=args.num_pairs, seed=args.seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "fpr", "tpr"])
    for i, threshold in enumerate(roc.thresholds):
        writer.writerow([f"{threshold:.9f}", f"{roc.fpr[i + 1]:.9f}", f"{roc.tpr[i + 1]:.9f}"])
    atomic_write_bytes(args.out, buf.getvalue().encode())
    print(f"auc {roc.auc:.6f} ({roc.num_positive} positive / {roc.num_negative} negative pairs)")
    return 0


# ---------------------------------------------------------------------------
# autosc / kmeans baselines


def cmd_autosc(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    alpha_set = tuple(int(a) for a in args.alpha_set.split(","))

    def one(fm_path: str, stem: str) -> None:
        fm = load_features(fm_path)
        seg, report = autosc_segment(fm, alpha_set=alpha_set, k_max=args.k_max)
        save_labels(LabelMap(seg.labels, ignore_index=args.ignore_index),
                    os.path.join(args.out, stem + ".png"))
        doc = {
            "alpha_chosen": report.alpha_chosen,
            "k_chosen": report.k_chosen,
            "best_gap": report.best_gap,
            "gaps": {str(a): g.tolist() for a, g in sorted(report.gaps.items())},
            "spectra": {str(a): s.tolist() for a, s in sorted(report.spectra.items())},
        }
        atomic_write_bytes(os.path.join(args.out, stem + "_gaps.json"),
                           (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())

    tasks = [(stem, (lambda f=fm_path, s=stem: one(f, s)))
             for stem, fm_path in _list_inputs(args.features, FEATURE_EXT)]
    return _run_per_file(args.jobs, tasks)


def cmd_kmeans(args: argparse.Namespace) -> int:
    if (args.k is None) == (not args.k_from_gt):
        raise SpecsegError("pass exactly one of --k or --k-from-gt")
    if args.k_from_gt and args.gt is None:
        raise SpecsegError("--k-from-gt needs --gt")
    os.makedirs(args.out, exist_ok=True)

    def one(fm_path: str, stem: str) -> None:
        fm = load_features(fm_path)
        if args.k_from_gt:
            gt_path = _counterpart(stem, args.gt, ".png", "ground-truth map")
            gt_lm = load_labels(gt_path, ignore_index=args.ignore_index)
            classes = np.unique(gt_lm.labels[gt_lm.labels != gt_lm.ignore_index])
            if classes.size == 0:
                raise SpecsegError(f"{stem}: ground truth has no labeled pixels")
            k = int(classes.size)
        else:
            k = int(args.k)
        seg = kmeans_cluster(fm, k, seed=args.seed)
        save_labels(LabelMap(seg.labels, ignore_index=args.ignore_index),
                    os.path.join(args.out, stem + ".png"))

    tasks = [(stem, (lambda f=fm_path, s=stem: one(f, s)))
             for stem, fm_path in _list_inputs(args.features, FEATURE_EXT)]
    return _run_per_file(args.jobs, tasks)


# ---------------------------------------------------------------------------
# parser


def _config_from(args: argparse.Namespace, tau_ok: bool = True) -> RunConfig:
    return RunConfig(
        tau=args.tau if tau_ok else DEFAULT_TAU,
        alpha=args.alpha if tau_ok else DEFAULT_ALPHA,
        splits=args.splits,
        min_size=args.min_size,
        clamp=not args.no_clamp,
        pamr=args.pamr if hasattr(args, "pamr") else False,
        pamr_iters=getattr(args, "pamr_iters", DEFAULT_PAMR_ITERATIONS),
        dilations=tuple(int(d) for d in getattr(args, "dilations", "1,2,4,8,12,24").split(",")),
        upsample=args.upsample,
        ignore_index=args.ignore_index,
        background=args.background,
        seed=getattr(args, "seed", 0),
        jobs=getattr(args, "jobs", 1),
    )


def _add_common(p: argparse.ArgumentParser, pamr: bool) -> None:
    p.add_argument("--splits", type=int, default=DEFAULT_SPLITS,
                   help="eigenvector thresholds examined per split")
    p.add_argument("--min-size", type=int, default=DEFAULT_MIN_SIZE,
                   help="smallest admissible side of a split, in patches")
    p.add_argument("--no-clamp", action="store_true",
                   help="exponentiate signed cosines instead of clamping negatives to zero")
    p.add_argument("--upsample", choices=[UPSAMPLE_CONCEPT, UPSAMPLE_NEAREST],
                   default=UPSAMPLE_CONCEPT, help="pixel-level upsampling mode")
    p.add_argument("--ignore-index", type=int, default=DEFAULT_IGNORE_INDEX,
                   help="label value excluded from evaluation")
    p.add_argument("--background", type=int, default=None,
                   help="background class id for many-to-one matching")
    if pamr:
        p.add_argument("--pamr", action=argparse.BooleanOptionalAction, default=True,
                       help="edge-aware refinement of the pixel labels")
        p.add_argument("--pamr-iters", type=int, default=DEFAULT_PAMR_ITERATIONS)
        p.add_argument("--dilations", type=str, default=",".join(map(str, DEFAULT_DILATIONS)),
                       help="comma-separated neighborhood dilations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specseg",
        description="Zero-shot segmentation of dense feature maps by recursive normalized cuts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment feature containers into label PNGs")
    p.add_argument("features", help=f"a *{FEATURE_EXT} file or a directory of them")
    p.add_argument("--image", default=None, help="RGB PNG (or directory) paired by stem")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="granularity threshold")
    p.add_argument("--alpha", type=int, default=DEFAULT_ALPHA, help="cosine exponent")
    p.add_argument("--out-size", type=int, nargs=2, metavar=("H", "W"), default=None,
                   help="output resolution when no image is given")
    p.add_argument("--render", action="store_true", help="also write a palette blend PNG")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="parallel files")
    _add_common(p, pamr=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score predicted label PNGs against ground truth")
    p.add_argument("--pred", required=True, help="predicted label PNG file or directory")
    p.add_argument("--gt", required=True, help="ground-truth label PNG file or directory")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--ignore-index", type=int, default=DEFAULT_IGNORE_INDEX)
    p.add_argument("--background", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid-sweep tau and alpha, reporting mIoU per cell")
    p.add_argument("--features", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--tau", type=str, default="0.35,0.55,0.75",
                   help="comma-separated tau values")
    p.add_argument("--alpha", type=str, default=str(DEFAULT_ALPHA),
                   help="comma-separated alpha values")
    _add_common(p, pamr=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("coherence", help="ROC/AUC of cosine vs same-class on patch pairs")
    p.add_argument("--features", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="ROC CSV path")
    p.add_argument("--num-pairs", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ignore-index", type=int, default=DEFAULT_IGNORE_INDEX)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("autosc", help="spectrum-selected (alpha, k) segmentation")
    p.add_argument("features", help=f"a *{FEATURE_EXT} file or a directory of them")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha-set", type=str, default=",".join(map(str, DEFAULT_ALPHA_SET)))
    p.add_argument("--k-max", type=int, default=DEFAULT_K_MAX)
    p.add_argument("--ignore-index", type=int, default=DEFAULT_IGNORE_INDEX)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_autosc)

    p = sub.add_parser("kmeans", help="k-means baseline over normalized features")
    p.add_argument("features", help=f"a *{FEATURE_EXT} file or a directory of them")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None, help="fixed cluster count")
    p.add_argument("--k-from-gt", action="store_true",
                   help="take k from the paired ground-truth map's class count")
    p.add_argument("--gt", default=None, help="ground-truth PNGs for --k-from-gt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ignore-index", type=int, default=DEFAULT_IGNORE_INDEX)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_kmeans)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("SPECSEG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except SpecsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
