"""Exponentiated cosine affinity graphs over patch features.

Patches become nodes of a dense weighted graph whose edge weights are
cosine similarities raised to a positive integer power alpha:

    W_ij = max(0, cos(z_i, z_j)) ** alpha        W_ii = 1

Clamping negatives to zero before exponentiation keeps weights in [0, 1]
regardless of alpha's parity; the power then acts as a soft threshold that
drives weak similarities toward zero while leaving strong ones nearly
untouched, sharpening the graph's block structure without a hard cutoff.
Self-loops of weight one keep every degree strictly positive, so the
normalized-cut denominators below never vanish.

Subgraphs are extracted by slicing rows and columns of the parent weight
matrix. Degrees are recomputed from the slice (self-loops kept); cosines
are never re-exponentiated at deeper recursion levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySubset, IndexOutOfRange, ZeroNormPatch
from .tensorio import FeatureMap


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Dense symmetric affinity matrix with cached degrees and node identity.

    ``node_ids`` are the original flat patch indices; they survive subgraph
    extraction so that recursion results can be mapped back onto the grid.
    """

    weights: np.ndarray
    degrees: np.ndarray
    node_ids: np.ndarray

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1]:
            raise ValueError(f"weights must be square, got {self.weights.shape}")
        n = self.weights.shape[0]
        if self.degrees.shape != (n,) or self.node_ids.shape != (n,):
            raise ValueError("degrees and node_ids must each have one entry per node")

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def _integer_power(base: np.ndarray, alpha: int) -> np.ndarray:
    """base ** alpha by repeated squaring; alpha >= 1.

    Elementwise np.power is an order of magnitude slower on the dense n x n
    matrices this engine works with, and exponentiation by squaring is exact
    for integer exponents.
    """
    result = None
    square = base
    e = alpha
    while e:
        if e & 1:
            result = square.copy() if result is None else result * square
        e >>= 1
        if e:
            square = square * square
    return result


def build_affinity(fm: FeatureMap, alpha: int = 10, clamp: bool = True) -> AffinityGraph:
    """Build the dense affinity graph for a feature map.

    alpha must be a positive integer. With ``clamp=False`` the signed cosine
    is exponentiated as-is (for side-by-side comparisons); the [0, 1] weight
    range and the positivity of degrees are then no longer guaranteed.

    Raises ZeroNormPatch if any patch feature has zero norm.
    """
    if not isinstance(alpha, (int, np.integer)) or alpha < 1:
        raise ValueError(f"alpha must be a positive integer, got {alpha!r}")
    feats = fm.flat().astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroNormPatch(f"patch {int(bad[0])} has zero feature norm")

    unit = feats / norms[:, None]
    cos = unit @ unit.T
    cos = (cos + cos.T) * 0.5  # exact symmetry; BLAS output can differ by 1 ulp across the diagonal
    if clamp:
        np.clip(cos, 0.0, 1.0, out=cos)
    else:
        np.clip(cos, -1.0, 1.0, out=cos)
    weights = _integer_power(cos, int(alpha))
    np.fill_diagonal(weights, 1.0)
    degrees = weights.sum(axis=1)
    node_ids = np.arange(fm.num_patches, dtype=np.int64)
    return AffinityGraph(weights=weights, degrees=degrees, node_ids=node_ids)


def subgraph(g: AffinityGraph, nodes: np.ndarray) -> AffinityGraph:
    """Restrict the graph to ``nodes`` (positions into g, ascending or not).

    The weight block is sliced, degrees are recomputed from the slice, and
    original node identities are carried along.
    """
    idx = np.asarray(nodes, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise EmptySubset("subgraph needs at least one node")
    if idx.size != np.unique(idx).size:
        raise IndexOutOfRange("subgraph node list contains duplicates")
    if idx.min() < 0 or idx.max() >= g.n:
        raise IndexOutOfRange(f"node index out of range for graph of size {g.n}")
    weights = g.weights[np.ix_(idx, idx)]
    degrees = weights.sum(axis=1)
    return AffinityGraph(weights=weights, degrees=degrees, node_ids=g.node_ids[idx])
