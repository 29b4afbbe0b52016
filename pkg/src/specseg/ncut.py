"""Recursive normalized-cut partitioning of affinity graphs.

The normalized cut of a bipartition (A, B) of a weighted graph is

    NCut(A, B) = cut(A, B) / assoc(A, V) + cut(A, B) / assoc(B, V)

with cut the total weight crossing the partition and assoc a side's total
degree. Splitting proceeds by thresholding the second-smallest generalized
eigenvector (the relaxed minimizer): l evenly spaced thresholds strictly
inside the vector's value range are scored exactly and the cheapest kept.
A split is accepted while its cost stays at or below the granularity
threshold tau; recursion then continues independently on both sides with
degrees recomputed from the sliced weight block. Raising tau therefore
only ever refines a partition: the tree for a smaller tau is a pruned
prefix of the tree for a larger one.

Leaves record why they stopped: ``cost_above_tau`` (a candidate split
existed but was too expensive), ``too_small`` (side sizes cannot satisfy
min_size), or ``no_valid_split`` (constant eigenvector or every threshold
violated min_size).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .affinity import AffinityGraph, build_affinity, subgraph
from .errors import EmptySide, NoValidSplit
from .spectral import fiedler
from .tensorio import FeatureMap

DEFAULT_TAU = 0.5
DEFAULT_ALPHA = 10
DEFAULT_SPLITS = 32
DEFAULT_MIN_SIZE = 2

STOP_COST_ABOVE_TAU = "cost_above_tau"
STOP_TOO_SMALL = "too_small"
STOP_NO_VALID_SPLIT = "no_valid_split"


@dataclass(frozen=True, eq=False)
class SegmentationMap:
    """Per-patch segment labels on the feature grid.

    Labels are contiguous 0..num_segments-1 and numbered by first occurrence
    in row-major scan order, so two runs that find the same partition agree
    on the labeling too.
    """

    labels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.labels, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError(f"segmentation labels must be 2-D, got {arr.shape}")
        flat = arr.ravel()
        seen = np.unique(flat)
        if seen.min() < 0 or seen.max() >= flat.size or seen.size != seen.max() + 1:
            raise ValueError("labels must be contiguous integers starting at 0")
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def num_segments(self) -> int:
        return int(self.labels.max()) + 1


@dataclass
class PartitionNode:
    """One node of the recursion tree over original flat patch indices."""

    node_ids: np.ndarray
    split_cost: Optional[float] = None
    candidate_cost: Optional[float] = None
    stop_reason: Optional[str] = None
    children: Optional[tuple["PartitionNode", "PartitionNode"]] = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def leaves(self) -> list["PartitionNode"]:
        if self.is_leaf:
            return [self]
        left, right = self.children
        return left.leaves() + right.leaves()

    def to_dict(self) -> dict:
        doc: dict = {"node_ids": [int(i) for i in self.node_ids]}
        if self.is_leaf:
            doc["stop_reason"] = self.stop_reason
            if self.candidate_cost is not None:
                doc["candidate_cost"] = self.candidate_cost
        else:
            doc["split_cost"] = self.split_cost
            doc["children"] = [c.to_dict() for c in self.children]
        return doc


@dataclass
class PartitionTree:
    root: PartitionNode
    tau: float
    alpha: int

    def leaves(self) -> list[PartitionNode]:
        return self.root.leaves()

    def to_dict(self) -> dict:
        return {"tau": self.tau, "alpha": self.alpha, "root": self.root.to_dict()}


def ncut_value(g: AffinityGraph, side_mask: np.ndarray) -> float:
    """Exact NCut cost of the bipartition given by a boolean mask.

    Degrees are taken from the graph as stored, so subgraph costs reflect
    the sliced block the recursion actually works on.
    """
    mask = np.asarray(side_mask, dtype=bool)
    if mask.shape != (g.n,):
        raise ValueError(f"mask shape {mask.shape} does not match graph size {g.n}")
    a = int(mask.sum())
    if a == 0 or a == g.n:
        raise EmptySide("both sides of a cut must be nonempty")
    cut = float(g.weights[mask][:, ~mask].sum())
    assoc_a = float(g.degrees[mask].sum())
    assoc_b = float(g.degrees[~mask].sum())
    return cut / assoc_a + cut / assoc_b


def best_split(
    g: AffinityGraph,
    x: np.ndarray,
    l: int = DEFAULT_SPLITS,
    min_size: int = DEFAULT_MIN_SIZE,
) -> tuple[np.ndarray, float]:
    """Cheapest thresholding of the eigenvector x into (x <= s, x > s).

    The l candidate thresholds are evenly spaced strictly inside
    (min x, max x): s_j = min + (max - min) * j / (l + 1). Candidates whose
    smaller side falls under min_size are skipped; among equal costs the
    smallest threshold index wins. Raises NoValidSplit when x is constant
    or every candidate is skipped.
    """
    if l < 2:
        raise ValueError(f"need at least 2 candidate thresholds, got {l}")
    if min_size < 1:
        raise ValueError(f"min_size must be >= 1, got {min_size}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n,):
        raise ValueError(f"vector shape {x.shape} does not match graph size {g.n}")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise NoValidSplit("eigenvector is constant; no interior threshold exists")

    best_mask: Optional[np.ndarray] = None
    best_cost = np.inf
    prev_count = -1
    for j in range(1, l + 1):
        s = lo + (hi - lo) * (j / (l + 1.0))
        mask = x <= s
        count = int(mask.sum())
        if count == prev_count:
            continue  # thresholds are ascending, equal counts mean an identical mask
        prev_count = count
        if count < min_size or g.n - count < min_size:
            continue
        cost = ncut_value(g, mask)
        if cost < best_cost:
            best_cost = cost
            best_mask = mask
    if best_mask is None:
        raise NoValidSplit(f"no threshold leaves both sides with >= {min_size} nodes")
    return best_mask, best_cost


def _descend(
    g: AffinityGraph,
    tau: float,
    l: int,
    min_size: int,
) -> PartitionNode:
    node = PartitionNode(node_ids=g.node_ids.copy())
    if g.n < max(2, 2 * min_size):
        node.stop_reason = STOP_TOO_SMALL
        return node
    pair = fiedler(g)
    try:
        mask, cost = best_split(g, pair.vector, l=l, min_size=min_size)
    except NoValidSplit:
        node.stop_reason = STOP_NO_VALID_SPLIT
        return node
    if cost > tau:
        node.stop_reason = STOP_COST_ABOVE_TAU
        node.candidate_cost = cost
        return node

    positions = np.arange(g.n)
    side_a, side_b = positions[mask], positions[~mask]
    # left child is the side holding the lowest original flat index
    if g.node_ids[side_a].min() > g.node_ids[side_b].min():
        side_a, side_b = side_b, side_a
    node.split_cost = cost
    left = _descend(subgraph(g, side_a), tau, l, min_size)
    right = _descend(subgraph(g, side_b), tau, l, min_size)
    node.children = (left, right)
    return node


def _labels_from_leaves(leaves: list[PartitionNode], shape: tuple[int, int]) -> np.ndarray:
    n = shape[0] * shape[1]
    flat = np.full(n, -1, dtype=np.int32)
    # first-occurrence numbering: leaves ordered by their smallest flat index
    for label, leaf in enumerate(sorted(leaves, key=lambda lf: int(lf.node_ids.min()))):
        flat[leaf.node_ids] = label
    assert (flat >= 0).all(), "leaves must partition the patch grid"
    return flat.reshape(shape)


def recursive_ncut(
    fm: FeatureMap,
    tau: float = DEFAULT_TAU,
    alpha: int = DEFAULT_ALPHA,
    l: int = DEFAULT_SPLITS,
    min_size: int = DEFAULT_MIN_SIZE,
    clamp: bool = True,
) -> tuple[SegmentationMap, PartitionTree]:
    """Segment a feature map by recursive normalized cuts.

    The affinity graph is built once; recursion slices it. tau in [0, 1)
    (tau = 0 admits only exactly-free splits and so returns one segment on
    any graph with positive inter-weights). Depth-first, left child first,
    where "left" holds the lowest original flat index.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must be in [0, 1), got {tau}")
    g = build_affinity(fm, alpha=alpha, clamp=clamp)
    root = _descend(g, tau, l, min_size)
    tree = PartitionTree(root=root, tau=float(tau), alpha=int(alpha))
    labels = _labels_from_leaves(tree.leaves(), (fm.height, fm.width))
    return SegmentationMap(labels), tree
