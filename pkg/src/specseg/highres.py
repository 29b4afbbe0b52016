"""From patch-level segments to pixel-level masks.

Three upsampling stages, composable but independently usable:

* ``masked_smm`` averages each segment's patch features into one concept
  embedding per segment (a segment-masked mean).
* ``bilinear_upsample`` interpolates the feature grid to pixel resolution
  with half-pixel centers: source coordinate s = (dst + 0.5) * src/dst - 0.5,
  clamped to [0, src - 1].
* ``assign_concepts`` labels every pixel with the concept of largest cosine
  similarity (ties to the smaller concept index).

``nearest_upsample`` is the blocky reference: each pixel copies the label
of its nearest patch center under the same half-pixel convention, ties to
the smaller flat index.

``pamr_refine`` is an edge-aware cleanup on the label simplex. With P^0 the
one-hot pixel probabilities, each iteration replaces P(i) by an affinity-
weighted average over a sparse neighborhood (8 directions at several
dilations). Affinities come from color differences scaled by the local
standard deviation per channel:

    e_c(i, j) = -(I_c(i) - I_c(j))^2 / (sigma_c(i)^2 + 1e-8)
    w(i, j)   = softmax_j mean_c e_c(i, j)

so wherever the image is locally flat the averaging is uniform, and across
strong edges it is suppressed. Every iteration is a convex combination:
probabilities stay a simplex and labels never appear out of nowhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroNormPixel
from .ncut import SegmentationMap
from .tensorio import FeatureMap

DEFAULT_PAMR_ITERATIONS = 10
DEFAULT_DILATIONS = (1, 2, 4, 8, 12, 24)
_VAR_EPS = 1e-8
_NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True, eq=False)
class ConceptBank:
    """One embedding per segment, rows aligned with segment labels."""

    embeddings: np.ndarray

    def __post_init__(self) -> None:
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1:
            raise ValueError(f"embeddings must be (K, dim), got {self.embeddings.shape}")

    @property
    def count(self) -> int:
        return self.embeddings.shape[0]


@dataclass(frozen=True, eq=False)
class HiResSegmentation:
    """Pixel-level labels in [0, num_segments); not every label must occur."""

    labels: np.ndarray
    num_segments: int

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.labels, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError(f"labels must be 2-D, got {arr.shape}")
        if arr.min() < 0 or arr.max() >= self.num_segments:
            raise ValueError(f"labels must lie in [0, {self.num_segments})")
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def masked_smm(fm: FeatureMap, seg: SegmentationMap) -> ConceptBank:
    """Average each segment's patch features into a concept embedding."""
    if (fm.height, fm.width) != (seg.height, seg.width):
        raise DimensionMismatch(
            f"feature grid {fm.height}x{fm.width} vs segmentation {seg.height}x{seg.width}")
    feats = fm.flat().astype(np.float64)
    flat = seg.labels.ravel()
    k = seg.num_segments
    bank = np.zeros((k, fm.dim))
    for label in range(k):
        members = flat == label
        assert members.any(), "SegmentationMap guarantees every label occurs"
        bank[label] = feats[members].mean(axis=0)
    if np.any(np.linalg.norm(bank, axis=1) == 0.0):
        raise ValueError("a segment's mean feature has zero norm; cosines would be undefined")
    return ConceptBank(bank)


def _source_coords(out_size: int, src_size: int) -> np.ndarray:
    """Half-pixel-center source coordinates for each destination index."""
    scale = src_size / out_size
    s = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    return np.clip(s, 0.0, src_size - 1.0)


def _bilinear_block(data: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Interpolate (src_h, src_w, d) data at the given source coordinates."""
    src_h, src_w = data.shape[:2]
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (sy - y0)[:, None, None]
    wx = (sx - x0)[None, :, None]
    v00 = data[y0][:, x0]
    v01 = data[y0][:, x1]
    v10 = data[y1][:, x0]
    v11 = data[y1][:, x1]
    top = v00 * (1.0 - wx) + v01 * wx
    bottom = v10 * (1.0 - wx) + v11 * wx
    return top * (1.0 - wy) + bottom * wy


def bilinear_upsample(fm: FeatureMap, out_h: int, out_w: int) -> FeatureMap:
    """Interpolate the feature grid to (out_h, out_w); out dims >= source dims."""
    if out_h < fm.height or out_w < fm.width:
        raise ValueError(
            f"output {out_h}x{out_w} must not be smaller than the source {fm.height}x{fm.width}")
    sy = _source_coords(out_h, fm.height)
    sx = _source_coords(out_w, fm.width)
    up = _bilinear_block(fm.data.astype(np.float64), sy, sx)
    return FeatureMap(up.astype(np.float32))


def nearest_upsample(seg: SegmentationMap, out_h: int, out_w: int) -> HiResSegmentation:
    """Copy each pixel's label from its nearest patch center.

    A pixel exactly between two centers rounds toward the smaller index on
    each axis, which is the smaller flat index overall.
    """
    if out_h < seg.height or out_w < seg.width:
        raise ValueError(
            f"output {out_h}x{out_w} must not be smaller than the source {seg.height}x{seg.width}")
    sy = _source_coords(out_h, seg.height)
    sx = _source_coords(out_w, seg.width)
    iy = np.clip(np.ceil(sy - 0.5).astype(np.int64), 0, seg.height - 1)
    ix = np.clip(np.ceil(sx - 0.5).astype(np.int64), 0, seg.width - 1)
    labels = seg.labels[np.ix_(iy, ix)]
    return HiResSegmentation(labels, seg.num_segments)


def _nearest_index_grid(out_h: int, out_w: int, src_h: int, src_w: int) -> tuple[np.ndarray, np.ndarray]:
    sy = _source_coords(out_h, src_h)
    sx = _source_coords(out_w, src_w)
    iy = np.clip(np.ceil(sy - 0.5).astype(np.int64), 0, src_h - 1)
    ix = np.clip(np.ceil(sx - 0.5).astype(np.int64), 0, src_w - 1)
    return iy, ix


def assign_concepts(
    fm_up: FeatureMap,
    bank: ConceptBank,
    source_seg: SegmentationMap | None = None,
) -> HiResSegmentation:
    """Label every pixel with its highest-cosine concept (ties: smaller index).

    A zero-norm pixel feature has no direction; when ``source_seg`` is given
    such pixels fall back to the label of their nearest patch, otherwise
    ZeroNormPixel is raised.
    """
    if bank.embeddings.shape[1] != fm_up.dim:
        raise DimensionMismatch(
            f"bank dim {bank.embeddings.shape[1]} vs feature dim {fm_up.dim}")
    pixels = fm_up.flat().astype(np.float64)
    norms = np.linalg.norm(pixels, axis=1)
    zero = norms == 0.0
    norms[zero] = 1.0
    concepts = bank.embeddings / np.linalg.norm(bank.embeddings, axis=1)[:, None]
    sims = (pixels / norms[:, None]) @ concepts.T
    labels = np.argmax(sims, axis=1).astype(np.int32)
    if zero.any():
        if source_seg is None:
            raise ZeroNormPixel(
                f"{int(zero.sum())} upsampled pixels have zero norm and no fallback was given")
        iy, ix = _nearest_index_grid(fm_up.height, fm_up.width, source_seg.height, source_seg.width)
        fallback = source_seg.labels[np.ix_(iy, ix)].ravel()
        labels[zero] = fallback[zero]
    return HiResSegmentation(labels.reshape(fm_up.height, fm_up.width), bank.count)


def concept_upsample(
    fm: FeatureMap,
    seg: SegmentationMap,
    out_h: int,
    out_w: int,
    chunk_rows: int = 64,
) -> HiResSegmentation:
    """masked_smm + bilinear_upsample + assign_concepts, streamed by rows.

    Identical per-pixel arithmetic to the composed calls (each output pixel's
    interpolation and cosine depend only on its own coordinates), but the
    full upsampled feature tensor is never materialized, which matters at
    pixel resolutions where it would not fit in memory.
    """
    bank = masked_smm(fm, seg)
    concepts = bank.embeddings / np.linalg.norm(bank.embeddings, axis=1)[:, None]
    sy = _source_coords(out_h, fm.height)
    sx = _source_coords(out_w, fm.width)
    iy_near, ix_near = _nearest_index_grid(out_h, out_w, seg.height, seg.width)
    data = fm.data.astype(np.float64)
    labels = np.empty((out_h, out_w), dtype=np.int32)
    for start in range(0, out_h, chunk_rows):
        stop = min(start + chunk_rows, out_h)
        block = _bilinear_block(data, sy[start:stop], sx).astype(np.float32)
        pixels = block.reshape(-1, fm.dim).astype(np.float64)
        norms = np.linalg.norm(pixels, axis=1)
        zero = norms == 0.0
        norms[zero] = 1.0
        sims = (pixels / norms[:, None]) @ concepts.T
        chunk_labels = np.argmax(sims, axis=1).astype(np.int32)
        if zero.any():
            fallback = seg.labels[np.ix_(iy_near[start:stop], ix_near)].ravel()
            chunk_labels[zero] = fallback[zero]
        labels[start:stop] = chunk_labels.reshape(stop - start, out_w)
    return HiResSegmentation(labels, bank.count)


def _shifted(arr: np.ndarray, dy: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    """arr sampled at (y + dy, x + dx), plus the in-bounds mask."""
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    valid = np.zeros((h, w), dtype=bool)
    y0, y1 = max(0, -dy), h - max(0, dy)
    x0, x1 = max(0, -dx), w - max(0, dx)
    if y1 > y0 and x1 > x0:
        out[y0:y1, x0:x1] = arr[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        valid[y0:y1, x0:x1] = True
    return out, valid


def _pamr_weights(image: np.ndarray, offsets: list[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    """Per-offset affinity weights (O, H, W) and validity masks."""
    h, w, c = image.shape
    count = np.zeros((h, w))
    total = np.zeros((h, w, c))
    total_sq = np.zeros((h, w, c))
    shifted = []
    masks = []
    for dy, dx in offsets:
        vals, valid = _shifted(image, dy, dx)
        shifted.append(vals)
        masks.append(valid)
        count += valid
        total += vals
        total_sq += vals * vals
    safe = np.maximum(count, 1.0)[..., None]
    mean = total / safe
    var = np.maximum(total_sq / safe - mean * mean, 0.0)

    energy = np.full((len(offsets), h, w), -np.inf)
    for o, (vals, valid) in enumerate(zip(shifted, masks)):
        e = -((image - vals) ** 2) / (var + _VAR_EPS)
        energy[o][valid] = e.mean(axis=2)[valid]
    peak = energy.max(axis=0)
    flat = ~np.isfinite(peak)  # pixels with no valid neighbor at all
    peak[flat] = 0.0
    weights = np.exp(energy - peak[None])
    weights[~np.stack(masks)] = 0.0
    norm = weights.sum(axis=0)
    norm[norm == 0.0] = 1.0
    weights /= norm[None]
    return weights, np.stack(masks)


def pamr_probabilities(
    image: np.ndarray,
    probabilities: np.ndarray,
    iterations: int = DEFAULT_PAMR_ITERATIONS,
    dilations: tuple[int, ...] = DEFAULT_DILATIONS,
) -> np.ndarray:
    """Run the adaptive-averaging iterations on an (H, W, K) simplex tensor.

    Pixels whose entire neighborhood is out of bounds keep their input
    distribution. The returned tensor is a fresh array.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3), got {image.shape}")
    if probabilities.shape[:2] != image.shape[:2]:
        raise DimensionMismatch(
            f"image {image.shape[:2]} vs probabilities {probabilities.shape[:2]}")
    offsets = [(dy * d, dx * d) for d in dilations for dy, dx in _NEIGHBOR_OFFSETS]
    weights, masks = _pamr_weights(np.asarray(image, dtype=np.float64), offsets)
    isolated = ~masks.any(axis=0)

    p = np.asarray(probabilities, dtype=np.float64).copy()
    for _ in range(iterations):
        nxt = np.zeros_like(p)
        for o, (dy, dx) in enumerate(offsets):
            vals, _ = _shifted(p, dy, dx)
            nxt += weights[o][..., None] * vals
        if isolated.any():
            nxt[isolated] = p[isolated]
        p = nxt
    return p


def pamr_refine(
    image: np.ndarray,
    hiseg: HiResSegmentation,
    iterations: int = DEFAULT_PAMR_ITERATIONS,
    dilations: tuple[int, ...] = DEFAULT_DILATIONS,
) -> HiResSegmentation:
    """Edge-aware refinement of pixel labels against their image.

    The labels are lifted to a one-hot simplex, averaged for ``iterations``
    rounds, and read back with argmax (ties to the smaller label). Output
    labels are always a subset of the input labels.
    """
    if image.shape[:2] != (hiseg.height, hiseg.width):
        raise DimensionMismatch(
            f"image {image.shape[:2]} vs segmentation {(hiseg.height, hiseg.width)}")
    k = hiseg.num_segments
    onehot = np.zeros((hiseg.height, hiseg.width, k))
    rows, cols = np.indices((hiseg.height, hiseg.width))
    onehot[rows, cols, hiseg.labels] = 1.0
    final = pamr_probabilities(image, onehot, iterations=iterations, dilations=dilations)
    labels = np.argmax(final, axis=2).astype(np.int32)
    return HiResSegmentation(labels, k)
