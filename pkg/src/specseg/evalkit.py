"""Matching-based segmentation scoring and feature-coherence analysis.

Predicted segments carry arbitrary ids, so scoring against ground truth
first solves an assignment problem per image: the IoU matrix between
predicted segments and the GT classes present is built on non-ignore
pixels, and a min-cost Hungarian pass over (1 - IoU) matches at most one
predicted segment per foreground class. With a background class, every
unmatched segment collapses onto it (many-to-one); without one, unmatched
segments become "void" predictions that count toward the union (FN) of
the GT classes they overlap but are never a false positive themselves.

Confusion counts accumulate over the dataset in a consistent class space
and mIoU is the mean of TP / (TP + FP + FN) over classes with nonzero
union.

The coherence probe asks a simpler question of the features themselves:
across random patch pairs, does cosine similarity rank same-class pairs
above cross-class ones? The ROC over a threshold sweep is summarized by
its trapezoidal AUC, which equals the Mann-Whitney pair statistic with
half credit for ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    DegenerateLabels,
    DimensionMismatch,
    NonFiniteCost,
    ZeroNormPatch,
)
from .highres import HiResSegmentation
from .tensorio import FeatureMap, LabelMap

VOID = -1
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _lsa_total(cost: np.ndarray) -> float:
    if min(cost.shape) == 0:
        return 0.0
    ri, ci = linear_sum_assignment(cost)
    return float(cost[ri, ci].sum())


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Min-cost one-to-one assignment on min(m, n) pairs.

    Returns (row, col) pairs sorted by row. Among all minimum-cost
    assignments the lexicographically smallest pair sequence is returned,
    built greedily: each row in turn takes the smallest column that still
    permits an optimal completion (rows that no optimal assignment uses
    are skipped). Each feasibility probe is one reduced solve, so the
    refinement costs O(m n) assignment solves; fine at evaluation sizes.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or min(cost.shape) < 1:
        raise ValueError(f"cost must be a nonempty 2-D matrix, got shape {cost.shape}")
    if not np.isfinite(cost).all():
        raise NonFiniteCost("cost matrix contains NaN or infinity")
    m, n = cost.shape
    want = min(m, n)
    best_total = _lsa_total(cost)
    tol = 1e-11 * max(1.0, abs(best_total))

    pairs: list[tuple[int, int]] = []
    rows_left = list(range(m))
    cols_left = list(range(n))
    fixed = 0.0
    for i in range(m):
        if len(pairs) == want:
            break
        taken = None
        for j in cols_left:
            rest_rows = [r for r in rows_left if r != i]
            rest_cols = [c for c in cols_left if c != j]
            rest = cost[np.ix_(rest_rows, rest_cols)] if rest_rows and rest_cols \
                else np.empty((0, 0))
            if abs(fixed + cost[i, j] + _lsa_total(rest) - best_total) <= tol:
                taken = j
                break
        if taken is not None:
            pairs.append((i, taken))
            fixed += cost[i, taken]
            cols_left.remove(taken)
            rows_left.remove(i)
        else:
            # no optimal assignment uses row i; drop it and re-check
            rest_rows = [r for r in rows_left if r != i]
            rest = cost[np.ix_(rest_rows, cols_left)]
            assert abs(fixed + _lsa_total(rest) - best_total) <= tol, \
                "row is unusable yet skipping it is not optimal"
            rows_left.remove(i)
    return pairs


@dataclass(frozen=True, eq=False)
class PerImageMatching:
    """Assignment of one image's predicted segments to GT classes."""

    pred_ids: np.ndarray
    gt_classes: np.ndarray
    iou: np.ndarray  # (len(pred_ids), len(gt_classes))
    mapping: dict[int, int]  # pred id -> class id, or VOID


def match_segments(
    pred: HiResSegmentation,
    gt: LabelMap,
    background_class: Optional[int] = None,
) -> PerImageMatching:
    """Hungarian-match predicted segments to the GT classes of one image."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatch(
            f"prediction {(pred.height, pred.width)} vs ground truth {(gt.height, gt.width)}")
    valid = gt.labels != gt.ignore_index
    gt_flat = gt.labels[valid]
    pred_flat = pred.labels[valid]

    gt_classes = np.unique(gt_flat)
    pred_ids = np.unique(pred_flat)
    if gt_classes.size == 0 or pred_ids.size == 0:
        fallback = VOID if background_class is None else int(background_class)
        return PerImageMatching(pred_ids, gt_classes,
                                np.zeros((pred_ids.size, gt_classes.size)),
                                {int(p): fallback for p in pred_ids})

    class_index = {int(c): i for i, c in enumerate(gt_classes)}
    ci = np.searchsorted(gt_classes, gt_flat)
    pi = np.searchsorted(pred_ids, pred_flat)
    inter = np.bincount(pi * gt_classes.size + ci,
                        minlength=pred_ids.size * gt_classes.size)
    inter = inter.reshape(pred_ids.size, gt_classes.size).astype(np.float64)
    area_pred = inter.sum(axis=1)
    area_gt = inter.sum(axis=0)
    union = area_pred[:, None] + area_gt[None, :] - inter
    iou = np.where(union > 0, inter / np.maximum(union, 1.0), 0.0)

    fg_mask = np.ones(gt_classes.size, dtype=bool)
    if background_class is not None and int(background_class) in class_index:
        fg_mask[class_index[int(background_class)]] = False

    mapping: dict[int, int] = {}
    if fg_mask.any():
        fg_cols = np.flatnonzero(fg_mask)
        for row, col in hungarian(1.0 - iou[:, fg_cols]):
            mapping[int(pred_ids[row])] = int(gt_classes[fg_cols[col]])
    fallback = VOID if background_class is None else int(background_class)
    for p in pred_ids:
        mapping.setdefault(int(p), fallback)
    return PerImageMatching(pred_ids, gt_classes, iou, mapping)


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Dataset-level confusion, per-class IoU, and their mean."""

    class_ids: np.ndarray
    confusion: np.ndarray  # (C, C) gt x predicted-class counts
    void_counts: np.ndarray  # (C,) gt pixels whose prediction stayed unmatched
    per_class_iou: np.ndarray  # (C,), NaN for classes with empty union
    miou: float
    num_images: int

    def to_dict(self) -> dict:
        # string keys so the dict round-trips through JSON unchanged
        iou = {str(int(c)): float(v) for c, v in zip(self.class_ids, self.per_class_iou)
               if np.isfinite(v)}
        return {
            "num_images": self.num_images,
            "class_ids": [int(c) for c in self.class_ids],
            "confusion": self.confusion.tolist(),
            "void_counts": [int(v) for v in self.void_counts],
            "per_class_iou": iou,
            "miou": float(self.miou),
        }


def accumulate_and_miou(
    items: Sequence[tuple[HiResSegmentation, LabelMap, PerImageMatching]],
    background_class: Optional[int] = None,
    class_ids: Optional[Sequence[int]] = None,
) -> EvalReport:
    """Fold per-image matchings into one confusion matrix and mIoU.

    The class space is the sorted union of GT classes present across the
    items (plus the background class when given), or ``class_ids`` when the
    caller wants a fixed space. Accumulation is order-independent: counts
    are integers and sum commutatively.
    """
    if class_ids is None:
        space: set[int] = set()
        for _, gt, matching in items:
            space.update(int(c) for c in matching.gt_classes)
        if background_class is not None:
            space.add(int(background_class))
        ids = np.array(sorted(space), dtype=np.int64)
    else:
        ids = np.unique(np.asarray(list(class_ids), dtype=np.int64))
    c = ids.size
    index = {int(v): i for i, v in enumerate(ids)}

    conf = np.zeros((c, c), dtype=np.int64)
    void_counts = np.zeros(c, dtype=np.int64)
    for pred, gt, matching in items:
        if (pred.height, pred.width) != (gt.height, gt.width):
            raise DimensionMismatch("prediction and ground truth sizes differ")
        valid = gt.labels != gt.ignore_index
        gt_flat = gt.labels[valid]
        pred_flat = pred.labels[valid]
        if gt_flat.size == 0:
            continue
        # relabel predictions through the matching; VOID becomes column c
        lut = np.full(int(pred.labels.max()) + 1, c, dtype=np.int64)
        for pid, cls in matching.mapping.items():
            lut[pid] = index[cls] if cls != VOID else c
        gt_idx = np.array([index[int(v)] for v in np.unique(gt_flat)])
        gt_mapped = gt_idx[np.searchsorted(np.unique(gt_flat), gt_flat)]
        pred_mapped = lut[pred_flat]
        counts = np.bincount(gt_mapped * (c + 1) + pred_mapped,
                             minlength=c * (c + 1)).reshape(c, c + 1)
        conf += counts[:, :c]
        void_counts += counts[:, c]

    tp = np.diag(conf).astype(np.float64)
    fp = conf.sum(axis=0).astype(np.float64) - tp
    fn = conf.sum(axis=1).astype(np.float64) - tp + void_counts
    union = tp + fp + fn
    iou = np.full(c, np.nan)
    present = union > 0
    iou[present] = tp[present] / union[present]
    miou = float(np.mean(iou[present])) if present.any() else float("nan")
    return EvalReport(class_ids=ids, confusion=conf, void_counts=void_counts,
                      per_class_iou=iou, miou=miou, num_images=len(items))


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC of cosine-vs-same-class over sampled patch pairs.

    thresholds are the distinct scores, descending. fpr/tpr carry one extra
    leading point so the curve starts at (0, 0) and ends at (1, 1).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    num_positive: int
    num_negative: int


def _patch_majority_labels(fm: FeatureMap, lm: LabelMap) -> tuple[np.ndarray, np.ndarray]:
    """Pool (features, majority label) for one image, dropping ignore-majority patches."""
    if lm.height < fm.height or lm.width < fm.width:
        raise DimensionMismatch(
            f"label map {lm.height}x{lm.width} smaller than patch grid {fm.height}x{fm.width}")
    row_bounds = (np.arange(fm.height + 1) * lm.height) // fm.height
    col_bounds = (np.arange(fm.width + 1) * lm.width) // fm.width
    patch_row = np.searchsorted(row_bounds, np.arange(lm.height), side="right") - 1
    patch_col = np.searchsorted(col_bounds, np.arange(lm.width), side="right") - 1
    patch_of_pixel = (patch_row[:, None] * fm.width + patch_col[None, :]).ravel()

    labels = lm.labels.ravel().astype(np.int64)
    is_ignore = labels == lm.ignore_index
    n_patches = fm.height * fm.width
    # compact the label range before the joint bincount so 16-bit ids stay cheap
    uniq, compact = np.unique(labels, return_inverse=True)
    span = uniq.size
    class_counts = np.bincount(
        patch_of_pixel[~is_ignore] * span + compact[~is_ignore],
        minlength=n_patches * span).reshape(n_patches, span)
    ignore_counts = np.bincount(patch_of_pixel[is_ignore], minlength=n_patches)

    best = class_counts.max(axis=1)
    winner = uniq[np.argmax(class_counts, axis=1)]  # first max: smallest label wins ties
    keep = best >= np.maximum(ignore_counts, 1)  # drop ignore-majority and all-ignore patches
    return fm.flat()[keep], winner[keep]


def coherence_auc(
    feature_maps: Sequence[FeatureMap],
    label_maps: Sequence[LabelMap],
    num_pairs: int = 10000,
    seed: int = 0,
) -> RocCurve:
    """ROC/AUC of cosine similarity as a same-class predictor on patch pairs.

    Patch labels come from pixel-majority votes over each patch's footprint
    (ties to the smaller class; patches where ignore outvotes every class
    are dropped). num_pairs ordered pairs (i != j) are sampled uniformly
    with replacement from the pooled patches of all images.
    """
    if len(feature_maps) != len(label_maps) or not feature_maps:
        raise ValueError("need equally many feature maps and label maps, at least one each")
    if num_pairs < 1:
        raise ValueError(f"num_pairs must be >= 1, got {num_pairs}")
    feats_list, labels_list = [], []
    for fm, lm in zip(feature_maps, label_maps):
        f, l = _patch_majority_labels(fm, lm)
        feats_list.append(f)
        labels_list.append(l)
    feats = np.concatenate(feats_list, axis=0).astype(np.float64)
    labels = np.concatenate(labels_list, axis=0)
    if labels.size < 2 or np.unique(labels).size < 2:
        raise DegenerateLabels("need at least two labeled patches of at least two classes")
    if not np.any(np.bincount(labels) >= 2):
        raise DegenerateLabels("no class has two patches, so no positive pair exists")

    norms = np.linalg.norm(feats, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroNormPatch(f"pooled patch {int(bad[0])} has zero feature norm")
    unit = feats / norms[:, None]

    rng = np.random.default_rng(seed)
    n = unit.shape[0]
    i = rng.integers(0, n, size=num_pairs)
    j = rng.integers(0, n - 1, size=num_pairs)
    j = j + (j >= i)
    scores = np.einsum("ij,ij->i", unit[i], unit[j])
    positive = labels[i] == labels[j]
    p = int(positive.sum())
    q = int(num_pairs - p)
    if p == 0 or q == 0:
        raise DegenerateLabels(
            f"sampled {p} positive and {q} negative pairs; need at least one of each")

    return roc_from_scores(scores, positive)


def roc_from_scores(scores: np.ndarray, positive: np.ndarray) -> RocCurve:
    """ROC curve and trapezoidal AUC of a score as a binary predictor.

    Scores are sorted descending; tied scores collapse into one threshold
    so the curve walks tie groups diagonally, which makes the trapezoidal
    AUC equal the pair-counting statistic (ties credited one half).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positive = np.asarray(positive, dtype=bool).ravel()
    if scores.shape != positive.shape:
        raise DimensionMismatch(
            f"scores and labels disagree: {scores.shape} vs {positive.shape}")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteCost("scores contain non-finite values")
    p = int(positive.sum())
    q = int(positive.size - p)
    if p == 0 or q == 0:
        raise DegenerateLabels(f"{p} positive and {q} negative samples; need both")

    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    t_sorted = positive[order]
    cum_tp = np.cumsum(t_sorted)
    cum_fp = np.cumsum(~t_sorted)
    last_of_group = np.flatnonzero(np.diff(s_sorted) != 0)
    last_of_group = np.append(last_of_group, scores.size - 1)
    thresholds = s_sorted[last_of_group]
    tpr = np.concatenate([[0.0], cum_tp[last_of_group] / p])
    fpr = np.concatenate([[0.0], cum_fp[last_of_group] / q])
    auc = float(_trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc,
                    num_positive=p, num_negative=q)
