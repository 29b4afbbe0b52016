"""Affinity graphs: exponentiated clamped cosines, degrees, subgraphs."""

import numpy as np
import pytest

from specseg.affinity import build_affinity, subgraph
from specseg.errors import EmptySubset, IndexOutOfRange, ZeroNormPatch
from specseg.tensorio import FeatureMap

from conftest import orthogonal_fm, random_fm


def test_known_cosine_powers():
    # unit vectors at cosine exactly 0, 0.5, and 1 (within float32 rounding)
    data = np.array([[[1.0, 0.0], [0.0, 1.0], [0.5, np.sqrt(3) / 2]]], np.float32)
    fm = FeatureMap(data)
    for alpha in (1, 2, 10):
        g = build_affinity(fm, alpha=alpha)
        assert g.weights[0, 1] == 0.0
        assert abs(g.weights[0, 2] - 0.5**alpha) < 1e-6
    assert abs(build_affinity(fm, alpha=10).weights[0, 2] - 0.0009765625) < 1e-6


def test_matches_float64_recompute():
    fm = random_fm(5, 6, 7, seed=11)
    for alpha in (1, 3, 10, 17):
        g = build_affinity(fm, alpha=alpha)
        feats = fm.flat().astype(np.float64)
        unit = feats / np.linalg.norm(feats, axis=1)[:, None]
        cos = unit @ unit.T
        cos = np.clip((cos + cos.T) * 0.5, 0.0, 1.0)
        expected = np.power(cos, alpha)
        np.fill_diagonal(expected, 1.0)
        assert np.abs(g.weights - expected).max() < 1e-12


def test_exact_symmetry_and_unit_diagonal():
    for seed in range(5):
        g = build_affinity(random_fm(4, 7, 9, seed=seed), alpha=7)
        assert np.array_equal(g.weights, g.weights.T)
        assert np.all(np.diag(g.weights) == 1.0)
        assert g.weights.min() >= 0.0 and g.weights.max() <= 1.0


def test_degrees_are_row_sums():
    g = build_affinity(random_fm(3, 8, 5, seed=2), alpha=4)
    assert np.array_equal(g.degrees, g.weights.sum(axis=1))
    assert np.all(g.degrees >= 1.0)  # self-loop alone contributes 1


def test_clamp_off_keeps_signed_cosines():
    data = np.array([[[1.0, 0.0], [-0.8, 0.6]]], np.float32)
    fm = FeatureMap(data)
    g_off = build_affinity(fm, alpha=3, clamp=False)
    assert g_off.weights[0, 1] < 0.0  # odd power keeps the sign
    assert abs(g_off.weights[0, 1] - (-0.8) ** 3) < 1e-6
    g_on = build_affinity(fm, alpha=3, clamp=True)
    assert g_on.weights[0, 1] == 0.0
    g_even = build_affinity(fm, alpha=2, clamp=False)
    assert g_even.weights[0, 1] > 0.0


def test_alpha_one_is_raw_clamped_cosine():
    fm = random_fm(4, 4, 6, seed=5)
    g = build_affinity(fm, alpha=1)
    feats = fm.flat().astype(np.float64)
    unit = feats / np.linalg.norm(feats, axis=1)[:, None]
    cos = np.clip(((unit @ unit.T) + (unit @ unit.T).T) * 0.5, 0.0, 1.0)
    np.fill_diagonal(cos, 1.0)
    assert np.abs(g.weights - cos).max() < 1e-15


def test_alpha_validation():
    fm = random_fm(2, 2, 3, seed=0)
    for bad in (0, -2, 2.5, "3"):
        with pytest.raises(ValueError):
            build_affinity(fm, alpha=bad)


def test_zero_norm_patch_raises():
    data = np.ones((2, 2, 3), np.float32)
    data[1, 0] = 0.0
    with pytest.raises(ZeroNormPatch):
        build_affinity(FeatureMap(data))


def test_orthogonal_blocks_are_binary():
    layout = np.array([[0, 0, 1, 1], [0, 0, 1, 1]])
    fm = orthogonal_fm(layout)
    for alpha in (1, 5, 10):
        g = build_affinity(fm, alpha=alpha)
        same = layout.ravel()[:, None] == layout.ravel()[None, :]
        assert np.array_equal(g.weights, same.astype(np.float64))


def test_subgraph_is_a_slice_with_fresh_degrees():
    g = build_affinity(random_fm(4, 5, 6, seed=9), alpha=6)
    nodes = np.array([0, 3, 7, 11, 19])
    sub = subgraph(g, nodes)
    assert np.array_equal(sub.weights, g.weights[np.ix_(nodes, nodes)])
    assert np.array_equal(sub.degrees, sub.weights.sum(axis=1))
    assert np.array_equal(sub.node_ids, nodes)
    # nested slicing keeps the original ids
    sub2 = subgraph(sub, np.array([1, 2]))
    assert np.array_equal(sub2.node_ids, np.array([3, 7]))
    assert sub2.weights[0, 1] == g.weights[3, 7]


def test_subgraph_rejects_bad_subsets():
    g = build_affinity(random_fm(2, 3, 4, seed=1))
    with pytest.raises(EmptySubset):
        subgraph(g, np.array([], dtype=np.int64))
    with pytest.raises(IndexOutOfRange):
        subgraph(g, np.array([0, 6]))
    with pytest.raises(IndexOutOfRange):
        subgraph(g, np.array([-1]))
    with pytest.raises(IndexOutOfRange):
        subgraph(g, np.array([2, 2]))
