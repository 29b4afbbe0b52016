"""Eigensolver contract against a dense generalized-eigenproblem oracle."""

import numpy as np
import pytest
import scipy.linalg as sla

from specseg.affinity import build_affinity
from specseg.spectral import DENSE_CUTOFF, fiedler, smallest_eigenpairs

from conftest import orthogonal_fm, random_affinity_graph, random_fm


def _oracle(g, k):
    """Smallest-k generalized eigenvalues of (D - W) x = lam D x."""
    lap = np.diag(g.degrees) - g.weights
    vals, vecs = sla.eigh(lap, np.diag(g.degrees))
    return vals[:k], vecs[:, :k]


def _check_contract(g, pairs):
    for p in pairs:
        dx = g.degrees * p.vector
        residual = (dx - g.weights @ p.vector) - p.value * dx
        assert np.abs(residual).max() <= 1e-8 * max(1.0, np.abs(dx).max())
        assert abs(np.sum(g.degrees * p.vector**2) - 1.0) <= 1e-9
        assert p.vector[np.argmax(np.abs(p.vector))] > 0.0
        assert 0.0 <= p.value <= 2.0 + 1e-12


def test_values_match_oracle_dense():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 21))
        g = random_affinity_graph(n, seed=seed)
        k = int(rng.integers(2, n + 1))
        pairs = smallest_eigenpairs(g, k)
        vals = np.array([p.value for p in pairs])
        ref, _ = _oracle(g, k)
        assert np.abs(vals - ref).max() <= 1e-8
        assert np.all(np.diff(vals) >= -1e-12)
        _check_contract(g, pairs)


def test_vectors_match_oracle_when_separated():
    for seed in range(10):
        g = random_affinity_graph(12, seed=100 + seed)
        pairs = smallest_eigenpairs(g, 4)
        ref_vals, ref_vecs = _oracle(g, 4)
        gaps_ok = np.diff(ref_vals, prepend=-1).min() > 1e-6
        if not gaps_ok:
            continue
        for i, p in enumerate(pairs):
            v = ref_vecs[:, i]
            v = v / np.sqrt(np.sum(g.degrees * v**2))
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            assert np.abs(p.vector - v).max() <= 1e-7


def test_trivial_pair_is_analytic():
    g = random_affinity_graph(9, seed=4)
    pairs = smallest_eigenpairs(g, 1)
    assert pairs[0].value == 0.0
    x = pairs[0].vector
    assert np.ptp(x) <= 1e-15  # constant vector
    assert abs(np.sum(g.degrees * x**2) - 1.0) <= 1e-12


def test_disconnected_graph_has_zero_fiedler_value():
    layout = np.array([[0, 0, 1, 1]] * 2)
    g = build_affinity(orthogonal_fm(layout), alpha=10)
    pair = fiedler(g)
    assert pair.value <= 1e-10
    # the vector separates the components by sign
    side = pair.vector > np.median(pair.vector)
    assert np.array_equal(side.reshape(layout.shape), layout == layout[0, -1]) or \
        np.array_equal(side.reshape(layout.shape), layout == layout[0, 0])


def test_three_components_give_triple_zero():
    layout = np.array([[0, 0, 1, 1, 2, 2]] * 3)
    g = build_affinity(orthogonal_fm(layout), alpha=5)
    pairs = smallest_eigenpairs(g, 4)
    vals = [p.value for p in pairs]
    assert max(vals[:3]) <= 1e-10
    assert vals[3] > 0.5


def test_lanczos_path_matches_dense_oracle():
    fm = random_fm(20, 15, 24, seed=7)  # 300 nodes, past the dense cutoff
    assert fm.num_patches > DENSE_CUTOFF
    g = build_affinity(fm, alpha=3)
    pairs = smallest_eigenpairs(g, 6)
    vals = np.array([p.value for p in pairs])
    ref, _ = _oracle(g, 6)
    assert np.abs(vals - ref).max() <= 1e-8
    _check_contract(g, pairs)


def test_lanczos_path_handles_disconnected_multiplicity():
    layout = np.zeros((18, 16), dtype=np.int64)
    layout[:, 8:] = 1
    g = build_affinity(orthogonal_fm(layout), alpha=10)
    assert g.n > DENSE_CUTOFF
    pairs = smallest_eigenpairs(g, 3)
    assert pairs[1].value <= 1e-10
    assert pairs[2].value > 0.5
    _check_contract(g, pairs)


def test_deterministic_across_runs():
    for n in (10, 300):
        g = random_affinity_graph(n, seed=42)
        a = smallest_eigenpairs(g, 5)
        b = smallest_eigenpairs(g, 5)
        for pa, pb in zip(a, b):
            assert pa.value == pb.value
            assert np.array_equal(pa.vector, pb.vector)


def test_k_bounds():
    g = random_affinity_graph(5, seed=0)
    with pytest.raises(ValueError):
        smallest_eigenpairs(g, 0)
    with pytest.raises(ValueError):
        smallest_eigenpairs(g, 6)
    assert len(smallest_eigenpairs(g, 5)) == 5


def test_fiedler_needs_two_nodes():
    g = random_affinity_graph(1, seed=0)
    with pytest.raises(ValueError):
        fiedler(g)
