"""Baselines that pick the segment count from the spectrum.

Automatic spectral clustering: for each candidate exponent alpha the
affinity spectrum is scanned for the largest relative eigen-gap

    gap(k) = (lambda_{k+1} - lambda_k) / (lambda_{k+1} + 1e-12)

whose argmax estimates the number of clusters. The (alpha, k) pair with
the globally largest gap wins; exact ties prefer the smaller alpha, then
the smaller k. Patches are then assigned k-way with a column-pivoted QR
on the eigenvector block: CPQR picks k anchor rows C and each patch takes
the column of largest magnitude in U C^{-1} (ties to the smaller column).

A plain k-means over L2-normalized features is included as the
no-spectral-structure reference point. Both baselines renumber their
labels by first occurrence in scan order, like the main engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .affinity import build_affinity
from .errors import KTooLarge, SingularAnchors, TooFewEigenvalues, ZeroNormPatch
from .ncut import SegmentationMap
from .spectral import smallest_eigenpairs
from .tensorio import FeatureMap

GAP_EPSILON = 1e-12
DEFAULT_ALPHA_SET = (1, 5, 10, 15)
DEFAULT_K_MAX = 32
KMEANS_SHIFT_TOL = 1e-6
KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class EigenGapReport:
    """What the alpha/k scan saw: spectra and gaps per candidate alpha."""

    alpha_chosen: int
    k_chosen: int
    best_gap: float
    spectra: dict[int, np.ndarray] = field(repr=False)
    gaps: dict[int, np.ndarray] = field(repr=False)


def relative_eigen_gap(eigenvalues: np.ndarray, k_max: int) -> tuple[int, np.ndarray]:
    """argmax_k gap(k) for k = 1..k_max, plus the full gap array.

    Needs k_max + 1 ascending eigenvalues (>= -1e-9; tiny negative rounding
    is tolerated). Ties go to the smallest k.
    """
    vals = np.asarray(eigenvalues, dtype=np.float64)
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if vals.ndim != 1 or vals.size < k_max + 1:
        raise TooFewEigenvalues(f"need {k_max + 1} eigenvalues, got {vals.size}")
    if np.any(np.diff(vals) < 0):
        raise ValueError("eigenvalues must be ascending")
    if vals.min() < -1e-9:
        raise ValueError("eigenvalues must be nonnegative up to rounding")
    gaps = (vals[1:k_max + 1] - vals[:k_max]) / (vals[1:k_max + 1] + GAP_EPSILON)
    k = int(np.argmax(gaps)) + 1  # argmax takes the first maximum: smallest k
    return k, gaps


def select_alpha(
    fm: FeatureMap,
    alpha_set: tuple[int, ...] = DEFAULT_ALPHA_SET,
    k_max: int = DEFAULT_K_MAX,
) -> EigenGapReport:
    """Scan the alpha set for the sharpest relative eigen-gap.

    k_max is capped at n - 1 (a spectrum of n eigenvalues supports gaps up
    to k = n - 1). Exact gap ties prefer the smaller alpha, then smaller k.
    """
    n = fm.num_patches
    k_max = min(int(k_max), n - 1)
    if k_max < 1:
        raise ValueError("need at least two patches to measure an eigen-gap")
    best: tuple[float, int, int] | None = None  # (gap, alpha, k)
    spectra: dict[int, np.ndarray] = {}
    all_gaps: dict[int, np.ndarray] = {}
    for alpha in sorted(int(a) for a in alpha_set):
        g = build_affinity(fm, alpha=alpha)
        pairs = smallest_eigenpairs(g, k_max + 1)
        vals = np.array([p.value for p in pairs])
        k, gaps = relative_eigen_gap(vals, k_max)
        spectra[alpha] = vals
        all_gaps[alpha] = gaps
        gap = float(gaps[k - 1])
        if best is None or gap > best[0]:
            best = (gap, alpha, k)
    assert best is not None
    return EigenGapReport(alpha_chosen=best[1], k_chosen=best[2], best_gap=best[0],
                          spectra=spectra, gaps=all_gaps)


def _renumber_first_occurrence(flat_labels: np.ndarray) -> np.ndarray:
    remap: dict[int, int] = {}
    out = np.empty_like(flat_labels)
    for i, lab in enumerate(flat_labels):
        key = int(lab)
        if key not in remap:
            remap[key] = len(remap)
        out[i] = remap[key]
    return out


def cpqr_kway(eigvectors: np.ndarray, k: int) -> np.ndarray:
    """k-way assignment from the n x k eigenvector block via pivoted QR.

    Column-pivoted QR of the transposed block ranks rows by how much new
    direction they contribute; the first k pivots become anchor rows C and
    patch i takes argmax_j |(U C^{-1})_{ij}| (ties to the smaller j).
    Labels are renumbered by first occurrence. Raises SingularAnchors when
    C is numerically singular, which signals k larger than the spectral
    structure supports.
    """
    u = np.asarray(eigvectors, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"eigenvector block must be 2-D, got {u.shape}")
    n, cols = u.shape
    if not 1 <= k <= cols:
        raise ValueError(f"k must be in [1, {cols}], got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} available patches")
    if k == 1:
        return np.zeros(n, dtype=np.int32)
    u = u[:, :k]
    _, _, piv = scipy.linalg.qr(u.T, pivoting=True, mode="economic")
    anchors = u[piv[:k]]
    cond = np.linalg.cond(anchors)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularAnchors(f"anchor block condition {cond:.3e}; k={k} too large")
    coeff = scipy.linalg.solve(anchors.T, u.T).T  # U C^{-1}
    labels = np.argmax(np.abs(coeff), axis=1).astype(np.int32)
    return _renumber_first_occurrence(labels)


def autosc_segment(
    fm: FeatureMap,
    alpha_set: tuple[int, ...] = DEFAULT_ALPHA_SET,
    k_max: int = DEFAULT_K_MAX,
) -> tuple[SegmentationMap, EigenGapReport]:
    """Segment with the spectrum-selected (alpha, k) and CPQR assignment."""
    report = select_alpha(fm, alpha_set=alpha_set, k_max=k_max)
    g = build_affinity(fm, alpha=report.alpha_chosen)
    pairs = smallest_eigenpairs(g, report.k_chosen)
    block = np.stack([p.vector for p in pairs], axis=1)
    labels = cpqr_kway(block, report.k_chosen)
    return SegmentationMap(labels.reshape(fm.height, fm.width)), report


def kmeans_cluster(fm: FeatureMap, k: int, seed: int = 0) -> SegmentationMap:
    """Lloyd k-means over L2-normalized patch features.

    Seeding is distance-weighted (k-means++ style) from the given seed;
    iteration stops when the largest centroid shift drops below 1e-6 or
    after 100 rounds. Inertia is asserted non-increasing every iteration.
    """
    n = fm.num_patches
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} available patches")
    feats = fm.flat().astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroNormPatch(f"patch {int(bad[0])} has zero feature norm")
    points = feats / norms[:, None]

    rng = np.random.default_rng(seed)
    centers = np.empty((k, points.shape[1]))
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers[0] = points[first]
    chosen[first] = True
    dist2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(dist2.sum())
        if total > 0.0:
            pick = int(rng.choice(n, p=dist2 / total))
        else:
            pick = int(np.flatnonzero(~chosen)[0])  # duplicates exhausted the distances
        centers[c] = points[pick]
        chosen[pick] = True
        dist2 = np.minimum(dist2, np.sum((points - centers[c]) ** 2, axis=1))

    prev_inertia = np.inf
    labels = np.zeros(n, dtype=np.int32)
    for _ in range(KMEANS_MAX_ITER):
        d2 = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centers.T
            + np.sum(centers**2, axis=1)[None, :]
        )
        labels = np.argmin(d2, axis=1).astype(np.int32)
        inertia = float(np.sum((points - centers[labels]) ** 2))
        assert inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12, \
            f"inertia increased: {prev_inertia} -> {inertia}"
        prev_inertia = inertia

        new_centers = centers.copy()
        d_assigned = np.sum((points - centers[labels]) ** 2, axis=1)
        for c in range(k):
            members = labels == c
            if members.any():
                new_centers[c] = points[members].mean(axis=0)
            else:
                # relocate an empty centroid to the current worst-served point
                worst = int(np.argmax(d_assigned))
                new_centers[c] = points[worst]
                labels[worst] = c
                d_assigned[worst] = -1.0
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < KMEANS_SHIFT_TOL:
            break

    return SegmentationMap(
        _renumber_first_occurrence(labels).reshape(fm.height, fm.width))
