"""Pixel-level transfer: interpolation, concept assignment, refinement."""

import numpy as np
import pytest

from specseg.errors import DimensionMismatch, ZeroNormPixel
from specseg.highres import (
    ConceptBank,
    HiResSegmentation,
    assign_concepts,
    bilinear_upsample,
    concept_upsample,
    masked_smm,
    nearest_upsample,
    pamr_probabilities,
    pamr_refine,
)
from specseg.ncut import SegmentationMap, recursive_ncut
from specseg.tensorio import FeatureMap

from conftest import block_layout, orthogonal_fm, random_fm


# ---------------------------------------------------------------------------
# masked_smm


def test_smm_is_the_segment_mean():
    data = np.zeros((1, 3, 3), np.float32)
    data[0, 0] = [1, 0, 0]
    data[0, 1] = [0, 1, 0]
    data[0, 2] = [1, 1, 0]
    seg = SegmentationMap(np.array([[0, 0, 0]], dtype=np.int32))
    bank = masked_smm(FeatureMap(data), seg)
    assert np.abs(bank.embeddings[0] - [2 / 3, 2 / 3, 0]).max() < 1e-7


def test_smm_single_patch_segment_and_shape_check():
    fm = random_fm(2, 2, 4, seed=1)
    seg = SegmentationMap(np.array([[0, 1], [2, 3]], dtype=np.int32))
    bank = masked_smm(fm, seg)
    assert bank.count == 4
    assert np.abs(bank.embeddings - fm.flat()).max() < 1e-7
    with pytest.raises(DimensionMismatch):
        masked_smm(random_fm(3, 2, 4), seg)


# ---------------------------------------------------------------------------
# bilinear / nearest upsampling


def test_bilinear_hand_values_1x2_to_1x4():
    fm = FeatureMap(np.array([[[0.0], [1.0]]], np.float32))
    up = bilinear_upsample(fm, 1, 4)
    assert np.array_equal(up.data.ravel(), np.array([0.0, 0.25, 0.75, 1.0], np.float32))


def test_bilinear_identity_and_constant():
    fm = random_fm(3, 4, 5, seed=2)
    same = bilinear_upsample(fm, 3, 4)
    assert np.array_equal(same.data, fm.data)
    const = FeatureMap(np.full((2, 2, 3), 0.7, np.float32))
    up = bilinear_upsample(const, 5, 9)
    assert np.all(up.data == np.float32(0.7))


def test_bilinear_matches_naive_loop():
    fm = random_fm(3, 5, 2, seed=8)
    out_h, out_w = 7, 11
    up = bilinear_upsample(fm, out_h, out_w)
    src = fm.data.astype(np.float64)
    for y in range(out_h):
        sy = min(max((y + 0.5) * (3 / out_h) - 0.5, 0.0), 2.0)
        y0 = int(np.floor(sy)); y1 = min(y0 + 1, 2)
        for x in range(out_w):
            sx = min(max((x + 0.5) * (5 / out_w) - 0.5, 0.0), 4.0)
            x0 = int(np.floor(sx)); x1 = min(x0 + 1, 4)
            wy, wx = sy - y0, sx - x0
            want = ((1 - wy) * (1 - wx) * src[y0, x0] + (1 - wy) * wx * src[y0, x1]
                    + wy * (1 - wx) * src[y1, x0] + wy * wx * src[y1, x1])
            assert np.abs(up.data[y, x] - want.astype(np.float32)).max() <= 1e-6


def test_bilinear_rejects_downscale():
    with pytest.raises(ValueError):
        bilinear_upsample(random_fm(4, 4, 2), 3, 8)


def test_nearest_integer_factor_makes_exact_blocks():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 4, size=(5, 7)).astype(np.int32)
    labels.flat[0:4] = [0, 1, 2, 3]  # keep all labels present
    seg = SegmentationMap(labels)
    for f in (2, 3, 4):
        hi = nearest_upsample(seg, 5 * f, 7 * f)
        assert np.array_equal(hi.labels, np.kron(labels, np.ones((f, f), np.int32)))


def test_nearest_identity_and_1x2_to_1x4():
    seg = SegmentationMap(np.array([[0, 1]], dtype=np.int32))
    assert np.array_equal(nearest_upsample(seg, 1, 2).labels, seg.labels)
    assert np.array_equal(nearest_upsample(seg, 1, 4).labels,
                          np.array([[0, 0, 1, 1]], np.int32))


def test_nearest_matches_index_formula():
    seg = SegmentationMap(np.arange(12, dtype=np.int32).reshape(3, 4))
    for out_h, out_w in ((3, 4), (5, 9), (8, 8), (11, 13)):
        hi = nearest_upsample(seg, out_h, out_w)
        for y in range(out_h):
            sy = min(max((y + 0.5) * (3 / out_h) - 0.5, 0.0), 2.0)
            iy = min(max(int(np.ceil(sy - 0.5)), 0), 2)  # exact .5 rounds down
            for x in range(out_w):
                sx = min(max((x + 0.5) * (4 / out_w) - 0.5, 0.0), 3.0)
                ix = min(max(int(np.ceil(sx - 0.5)), 0), 3)
                assert hi.labels[y, x] == seg.labels[iy, ix]


# ---------------------------------------------------------------------------
# concept assignment


def test_assign_exact_concept_match_and_k1():
    bank = ConceptBank(np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]))
    data = np.zeros((1, 3, 3), np.float32)
    data[0, 0, 2] = 5.0   # points along concept 2
    data[0, 1, 1] = 0.3
    data[0, 2, 0] = 1.0
    hi = assign_concepts(FeatureMap(data), bank)
    assert hi.labels.tolist() == [[2, 1, 0]]
    one = assign_concepts(FeatureMap(data), ConceptBank(np.array([[1.0, 1.0, 1.0]])))
    assert np.all(one.labels == 0)


def test_assign_tie_takes_smaller_concept():
    bank = ConceptBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    data = np.full((1, 1, 2), 0.5, np.float32)  # equal cosine to both
    hi = assign_concepts(FeatureMap(data), bank)
    assert hi.labels[0, 0] == 0


def test_assign_zero_norm_fallback_and_raise():
    bank = ConceptBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    data = np.zeros((1, 2, 2), np.float32)
    data[0, 1] = [0.0, 1.0]
    with pytest.raises(ZeroNormPixel):
        assign_concepts(FeatureMap(data), bank)
    source = SegmentationMap(np.array([[1, 0]], dtype=np.int32))
    hi = assign_concepts(FeatureMap(data), bank, source_seg=source)
    assert hi.labels[0, 0] == 1  # nearest patch label, not a cosine
    assert hi.labels[0, 1] == 1


def test_assign_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        assign_concepts(random_fm(1, 1, 3), ConceptBank(np.ones((2, 4))))


def test_native_roundtrip_reproduces_orthogonal_segments():
    layout = block_layout(4, 6, 3)
    fm = orthogonal_fm(layout)
    seg, _ = recursive_ncut(fm, tau=0.5, alpha=10)
    bank = masked_smm(fm, seg)
    hi = assign_concepts(bilinear_upsample(fm, 4, 6), bank, source_seg=seg)
    assert np.array_equal(hi.labels, seg.labels)


def test_concept_equals_nearest_on_constant_orthogonal_segments():
    layout = block_layout(3, 4, 2)
    fm = orthogonal_fm(layout)
    seg, _ = recursive_ncut(fm, tau=0.5, alpha=10)
    up_h, up_w = 9, 12
    by_concept = concept_upsample(fm, seg, up_h, up_w)
    by_nearest = nearest_upsample(seg, up_h, up_w)
    assert np.array_equal(by_concept.labels, by_nearest.labels)


def test_concept_upsample_equals_composed_pipeline():
    fm = random_fm(4, 5, 6, seed=21)
    seg, _ = recursive_ncut(fm, tau=0.8, alpha=3)
    for out_h, out_w in ((4, 5), (9, 13), (16, 20)):
        whole = concept_upsample(fm, seg, out_h, out_w)
        up = bilinear_upsample(fm, out_h, out_w)
        composed = assign_concepts(up, masked_smm(fm, seg), source_seg=seg)
        assert np.array_equal(whole.labels, composed.labels)
        assert whole.num_segments == seg.num_segments


def test_concept_upsample_streams_in_chunks():
    fm = random_fm(3, 4, 5, seed=22)
    seg, _ = recursive_ncut(fm, tau=0.8, alpha=2)
    a = concept_upsample(fm, seg, 10, 11, chunk_rows=2)
    b = concept_upsample(fm, seg, 10, 11, chunk_rows=64)
    assert np.array_equal(a.labels, b.labels)


# ---------------------------------------------------------------------------
# PAMR


def _naive_pamr(image, probs, iterations, dilations):
    """Independent per-pixel reimplementation of the refinement recurrence."""
    h, w, c = image.shape
    offsets = [(dy * d, dx * d) for d in dilations
               for dy, dx in ((-1, -1), (-1, 0), (-1, 1), (0, -1),
                              (0, 1), (1, -1), (1, 0), (1, 1))]
    weights = {}
    for y in range(h):
        for x in range(w):
            nbrs = [(y + dy, x + dx) for dy, dx in offsets
                    if 0 <= y + dy < h and 0 <= x + dx < w]
            if not nbrs:
                weights[(y, x)] = []
                continue
            vals = np.array([image[ny, nx] for ny, nx in nbrs])
            var = vals.var(axis=0)  # population variance per channel
            e = np.array([np.mean(-((image[y, x] - image[ny, nx]) ** 2) / (var + 1e-8))
                          for ny, nx in nbrs])
            wts = np.exp(e - e.max())
            wts /= wts.sum()
            weights[(y, x)] = list(zip(nbrs, wts))
    p = probs.astype(np.float64).copy()
    for _ in range(iterations):
        nxt = p.copy()
        for y in range(h):
            for x in range(w):
                if not weights[(y, x)]:
                    continue
                nxt[y, x] = sum(wt * p[ny, nx] for (ny, nx), wt in weights[(y, x)])
        p = nxt
    return p


def test_pamr_matches_naive_oracle():
    rng = np.random.default_rng(5)
    image = rng.uniform(size=(6, 7, 3))
    probs = rng.uniform(size=(6, 7, 4))
    probs /= probs.sum(axis=2, keepdims=True)
    for iterations in (1, 3):
        ours = pamr_probabilities(image, probs, iterations=iterations, dilations=(1, 2))
        ref = _naive_pamr(image, probs, iterations, (1, 2))
        assert np.abs(ours - ref).max() <= 1e-12


def test_pamr_preserves_simplex_every_iteration():
    rng = np.random.default_rng(9)
    image = rng.uniform(size=(8, 8, 3))
    probs = rng.uniform(size=(8, 8, 3))
    probs /= probs.sum(axis=2, keepdims=True)
    p = probs
    for _ in range(10):
        p = pamr_probabilities(image, p, iterations=1, dilations=(1, 2, 4))
        assert p.min() >= 0.0
        assert np.abs(p.sum(axis=2) - 1.0).max() <= 1e-12


def test_pamr_zero_iterations_is_identity():
    rng = np.random.default_rng(2)
    image = rng.uniform(size=(4, 4, 3))
    probs = rng.uniform(size=(4, 4, 2))
    probs /= probs.sum(axis=2, keepdims=True)
    assert np.array_equal(pamr_probabilities(image, probs, iterations=0), probs)


def test_pamr_constant_image_keeps_halves():
    # constant image: sigma = 0, so the weights are uniform over the valid
    # neighbors. Short runs keep the half/half split; long runs migrate a
    # few border pixels because out-of-bounds exclusion skews the reach of
    # the large dilations near corners (mirror-symmetrically on each side).
    image = np.full((8, 8, 3), 0.5)
    labels = np.zeros((8, 8), np.int32)
    labels[:, 4:] = 1
    for iterations in (1, 2):
        refined = pamr_refine(image, HiResSegmentation(labels, 2), iterations=iterations)
        assert np.array_equal(refined.labels, labels)
    long_run = pamr_refine(image, HiResSegmentation(labels, 2), iterations=10)
    moved = np.flatnonzero((long_run.labels != labels).any(axis=0))
    assert set(moved.tolist()) <= {3, 4}  # drift stays pinned to the seam


def test_pamr_snaps_jittered_boundary_to_color_edge():
    rng = np.random.default_rng(11)
    h, w = 16, 16
    image = np.zeros((h, w, 3))
    image[:, w // 2:] = 1.0
    wins = 0
    for _ in range(20):
        labels = np.zeros((h, w), np.int32)
        for row in range(h):
            cut = w // 2 + int(rng.integers(-2, 3))
            labels[row, cut:] = 1
        truth = (np.arange(w)[None, :] >= w // 2).astype(np.int32)
        truth = np.broadcast_to(truth, (h, w))
        before = float((labels == truth).mean())
        refined = pamr_refine(image, HiResSegmentation(labels, 2))
        after = float((refined.labels == truth).mean())
        if before == 1.0:
            wins += after == 1.0
        else:
            wins += after > before
    assert wins >= 19


def test_pamr_never_invents_labels():
    rng = np.random.default_rng(4)
    image = rng.uniform(size=(10, 10, 3))
    labels = (rng.uniform(size=(10, 10)) < 0.5).astype(np.int32)
    labels[0, 0], labels[0, 1] = 0, 1
    refined = pamr_refine(image, HiResSegmentation(labels, 4))
    assert set(np.unique(refined.labels)) <= set(np.unique(labels))


def test_pamr_argmax_tie_takes_smaller_label():
    # uniform half/half distribution stays tied everywhere on a constant
    # image, so the argmax must everywhere resolve to label 0
    image = np.full((4, 4, 3), 0.3)
    probs = np.full((4, 4, 2), 0.5)
    out = pamr_probabilities(image, probs, iterations=2, dilations=(1,))
    assert np.abs(out - 0.5).max() <= 1e-12
    labels = np.zeros((4, 4), np.int32)
    labels[::2, ::2] = 1
    refined = pamr_refine(image, HiResSegmentation(labels, 2), iterations=0)
    assert np.array_equal(refined.labels, labels)  # zero iterations: argmax of one-hot


def test_pamr_single_pixel_is_isolated():
    image = np.full((1, 1, 3), 0.2)
    probs = np.array([[[0.3, 0.7]]])
    out = pamr_probabilities(image, probs, iterations=5, dilations=(1, 2))
    assert np.array_equal(out, probs)


def test_pamr_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        pamr_refine(np.zeros((4, 4, 3)), HiResSegmentation(np.zeros((3, 4), np.int32), 1))


def test_hires_validation():
    with pytest.raises(ValueError):
        HiResSegmentation(np.array([[0, 2]], np.int32), 2)
    with pytest.raises(ValueError):
        HiResSegmentation(np.array([[-1, 0]], np.int32), 2)
