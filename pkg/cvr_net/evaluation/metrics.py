"""Box overlap, greedy matching, suppression and FROC utilities."""

from typing import List, Sequence, Tuple

import numpy as np

from ..schema import Detection, RoiGeometry

DEFAULT_IOU_THRESHOLD = 0.5


def iou(a: RoiGeometry, b: RoiGeometry) -> float:
    """Intersection over union of two center-based boxes."""
    if a == b:
        return 1.0
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def sort_by_score(dets: Sequence[Detection]) -> List[Detection]:
    """Descending score; ties keep their input order."""
    return sorted(dets, key=lambda d: -d.score)


def greedy_match_flags(dets: Sequence[Detection], gts: Sequence[RoiGeometry],
                       iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> Tuple[List[Detection], List[bool]]:
    """
    Score-ordered detections and whether each one is a true positive.

    Each detection in turn claims the unmatched ground truth it overlaps most,
    provided that overlap reaches ``iou_threshold``. Because earlier claims do
    not depend on later detections, the flags of the first ``k`` detections
    are the matching of the top-``k`` subset.
    """
    ordered = sort_by_score(dets)
    matched = [False] * len(gts)
    flags = []
    for det in ordered:
        best, best_iou = -1, iou_threshold
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            overlap = iou(det.geometry, gt)
            if overlap >= best_iou and (best < 0 or overlap > best_iou):
                best, best_iou = j, overlap
        if best >= 0:
            matched[best] = True
        flags.append(best >= 0)
    return ordered, flags


def match_detections(dets: Sequence[Detection], gts: Sequence[RoiGeometry],
                     iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> Tuple[int, int, int]:
    """``(tp, fp, fn)`` of greedy one-to-one matching."""
    _, flags = greedy_match_flags(dets, gts, iou_threshold)
    tp = sum(flags)
    return tp, len(flags) - tp, len(gts) - tp


def non_max_suppression(dets: Sequence[Detection], iou_threshold: float = 0.5) -> List[Detection]:
    """Keep detections in score order, dropping any that overlap a kept one above the threshold."""
    kept: List[Detection] = []
    for det in sort_by_score(dets):
        if all(iou(det.geometry, k.geometry) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


def f1_score(precision: float, recall: float) -> float:
    denom = precision + recall
    return 2.0 * precision * recall / denom if denom > 0 else 0.0


def froc_curve(scored_flags: Sequence[Tuple[float, bool]], n_gts: int,
               n_images: int) -> List[Tuple[float, float]]:
    """
    ``(fpi, tpr)`` at every distinct score threshold.

    ``scored_flags`` pools ``(score, is_tp)`` over all images, where the flags
    come from :func:`greedy_match_flags`. A threshold ``s`` keeps every
    detection scoring at least ``s``. Points are ordered by increasing FPI.
    """
    if n_images <= 0:
        raise ValueError("n_images must be positive")
    if not scored_flags:
        return []
    scores = np.array([s for s, _ in scored_flags], dtype=np.float64)
    hits = np.array([f for _, f in scored_flags], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    scores, hits = scores[order], hits[order]
    cum_tp = np.cumsum(hits)
    cum_fp = np.cumsum(1.0 - hits)
    # the last index of each run of equal scores closes that threshold
    ends = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    points = []
    for i in ends:
        tpr = cum_tp[i] / n_gts if n_gts else 0.0
        points.append((float(cum_fp[i] / n_images), float(tpr)))
    return points


def froc_interpolate(froc: Sequence[Tuple[float, float]], fpi_query: float) -> float:
    """Best TPR among curve points whose FPI does not exceed ``fpi_query``."""
    reachable = [tpr for fpi, tpr in froc if fpi <= fpi_query]
    return max(reachable) if reachable else 0.0
