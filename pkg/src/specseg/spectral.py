"""Generalized eigenpairs of the graph Laplacian pencil (D - W, D).

The partitioning machinery needs the smallest eigenpairs of

    (D - W) x = lambda D x

which are computed through the symmetric normalized Laplacian
L_sym = I - D^{-1/2} W D^{-1/2}: if L_sym v = lambda v then
x = D^{-1/2} v solves the pencil with the same eigenvalue. The
known null pair (lambda = 0, x constant) is never rediscovered
numerically; it is deflated by shifting its direction u = D^{1/2} 1
out of the spectrum (L_sym + 3 u u^T pushes it to 3, above the
lambda <= 2 bound for everything else) and the analytic pair is
prepended to the result.

Contract, enforced on every returned pair:

* residual        max|.| of (D - W) x - lambda D x  <=  1e-8 * max(1, max|D x|)
* normalization   sum_i d(i) x_i^2 = 1
* sign            the largest-magnitude entry of x is positive
* determinism     bit-identical output for bit-identical graphs

Dense graphs up to DENSE_CUTOFF nodes get a full LAPACK decomposition.
Larger graphs use Lanczos with full reorthogonalization, a fixed
index-ramp start vector, and one deflation lock per converged pair, so
repeated eigenvalues of disconnected graphs are recovered reliably. The
iteration budget is 10 n operator applications per call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .affinity import AffinityGraph
from .errors import ConvergenceFailure

DENSE_CUTOFF = 256
RESIDUAL_RTOL = 1e-8
BUDGET_FACTOR = 10
_DEFLATION_SHIFT = 3.0  # anything > 2 clears the L_sym spectral bound


@dataclass(frozen=True, eq=False)
class EigenPair:
    """One generalized eigenpair; value >= 0, vector D-normalized, sign-fixed."""

    value: float
    vector: np.ndarray


def _check_degrees(g: AffinityGraph) -> np.ndarray:
    d = g.degrees
    if np.any(d <= 0.0):
        raise ValueError("spectral ops need strictly positive degrees; got a nonpositive degree "
                         "(only possible with unclamped affinities)")
    return d


def _finalize(value: float, x: np.ndarray, d: np.ndarray) -> EigenPair:
    """Apply the normalization, sign, and value conventions to a raw pair."""
    scale = float(np.sqrt(np.sum(d * x * x)))
    x = x / scale
    peak = int(np.argmax(np.abs(x)))
    if x[peak] < 0.0:
        x = -x
    if value < 0.0:
        if value < -1e-9:
            raise ConvergenceFailure(f"eigenvalue {value} below the [0, 2] bound")
        value = 0.0
    return EigenPair(value=value, vector=x)


def _trivial_pair(d: np.ndarray) -> EigenPair:
    n = d.shape[0]
    return _finalize(0.0, np.ones(n), d)


def _seed(n: int, index: int) -> np.ndarray:
    """Deterministic start-vector family: index ramp, then cosine waves."""
    if index == 0:
        return np.arange(1, n + 1, dtype=np.float64)
    return np.cos(np.pi * index * (np.arange(n, dtype=np.float64) + 0.5) / n)


def _dense_smallest(lsym_deflated: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = scipy.linalg.eigh(lsym_deflated)
    return vals[:count], vecs[:, :count]


def _lanczos_smallest(
    op: np.ndarray, exclude: np.ndarray, count: int, budget: int
) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``count`` eigenpairs of symmetric ``op``, restricted to the
    orthogonal complement of the columns of ``exclude``.

    One Ritz pair is locked per restart; every Lanczos vector is fully
    reorthogonalized against the basis, the excluded columns, and all locked
    vectors, which keeps repeated eigenvalues (disconnected graphs) honest.
    """
    n = op.shape[0]
    dmax = float(np.max(np.diag(op))) + _DEFLATION_SHIFT  # crude norm bound, only used for tolerances
    lock_tol = max(1e-13 * dmax, RESIDUAL_RTOL / (4.0 * np.sqrt(n)))
    used = 0
    seed_index = 0
    locked_vals: list[float] = []
    locked_vecs: list[np.ndarray] = []

    while len(locked_vals) < count:
        ortho = np.column_stack([exclude] + [v[:, None] for v in locked_vecs]) \
            if locked_vecs else exclude
        active_dim = n - ortho.shape[1]
        if active_dim < 1:
            raise ConvergenceFailure("no active subspace left to search")

        q = None
        while q is None:
            if seed_index > n + 8:
                raise ConvergenceFailure("deterministic seed family exhausted")
            cand = _seed(n, seed_index)
            seed_index += 1
            for _ in range(2):
                cand = cand - ortho @ (ortho.T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-8:
                q = cand / norm

        basis = [q]
        alphas: list[float] = []
        betas: list[float] = []
        q_prev = np.zeros(n)
        beta_prev = 0.0

        while True:
            if used >= budget:
                raise ConvergenceFailure(
                    f"iteration budget {budget} exhausted with {len(locked_vals)} of {count} pairs locked")
            w = op @ q
            used += 1
            a = float(q @ w)
            alphas.append(a)
            w = w - a * q - beta_prev * q_prev
            bmat = np.stack(basis, axis=1)
            for _ in range(2):
                w = w - bmat @ (bmat.T @ w)
                w = w - ortho @ (ortho.T @ w)
            b = float(np.linalg.norm(w))

            if len(alphas) == 1:
                theta = alphas[0]
                s = np.ones(1)
            else:
                thetas, svecs = scipy.linalg.eigh_tridiagonal(alphas, betas)
                theta = float(thetas[0])
                s = svecs[:, 0]
            resid_est = b * abs(float(s[-1]))

            if resid_est <= lock_tol or b <= 1e-13 * dmax or len(alphas) >= active_dim:
                y = bmat @ s
                y = y - ortho @ (ortho.T @ y)
                ynorm = np.linalg.norm(y)
                if ynorm <= 1e-10:
                    break  # collapsed onto excluded space; reseed
                locked_vals.append(float(theta))
                locked_vecs.append(y / ynorm)
                break

            betas.append(b)
            q_prev, beta_prev = q, b
            q = w / b
            basis.append(q)

    order = np.argsort(np.asarray(locked_vals), kind="stable")[:count]
    vals = np.asarray(locked_vals)[order]
    vecs = np.stack([locked_vecs[i] for i in order], axis=1)
    return vals, vecs


def _verify_residuals(g: AffinityGraph, pairs: list[EigenPair]) -> None:
    d = g.degrees
    for p in pairs:
        dx = d * p.vector
        resid = dx - g.weights @ p.vector - p.value * dx
        bound = RESIDUAL_RTOL * max(1.0, float(np.max(np.abs(dx))))
        if float(np.max(np.abs(resid))) > bound:
            raise ConvergenceFailure(
                f"residual {float(np.max(np.abs(resid))):.3e} exceeds bound {bound:.3e} "
                f"for eigenvalue {p.value:.6e}")


def smallest_eigenpairs(g: AffinityGraph, k: int) -> list[EigenPair]:
    """The k smallest generalized eigenpairs, ascending, trivial pair first."""
    n = g.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    d = _check_degrees(g)
    pairs = [_trivial_pair(d)]
    if k > 1:
        inv_sqrt_d = 1.0 / np.sqrt(d)
        lsym = -(g.weights * inv_sqrt_d[:, None]) * inv_sqrt_d[None, :]
        np.fill_diagonal(lsym, 1.0 + np.diag(lsym))
        u = np.sqrt(d)
        u /= np.linalg.norm(u)
        if n <= DENSE_CUTOFF:
            deflated = lsym + _DEFLATION_SHIFT * np.outer(u, u)
            vals, vecs = _dense_smallest(deflated, k - 1)
        else:
            deflated = lsym + _DEFLATION_SHIFT * np.outer(u, u)
            vals, vecs = _lanczos_smallest(deflated, u[:, None], k - 1, BUDGET_FACTOR * n)
        for i in range(k - 1):
            x = inv_sqrt_d * vecs[:, i]
            pairs.append(_finalize(float(vals[i]), x, d))
    _verify_residuals(g, pairs)
    return pairs


def fiedler(g: AffinityGraph) -> EigenPair:
    """The second-smallest generalized eigenpair (the partitioning direction)."""
    if g.n < 2:
        raise ValueError("fiedler needs at least two nodes")
    return smallest_eigenpairs(g, 2)[1]
