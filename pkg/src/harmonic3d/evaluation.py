"""Detection evaluation: NMS, greedy matching, AP with 40 recall positions, AOS.

Metrics follow the KITTI 40-recall-position protocol on a single difficulty
bucket. The confidence-IoU Pearson correlation over matched detections
quantifies how well scores track localization quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from harmonic3d.geometry import Box3D, boxes_to_array, iou_matrix, wrap_angle

N_RECALL = 40
IOU_KINDS = ("bev", "3d")


class EvaluationError(ValueError):
    pass


class UndefinedMetric(EvaluationError):
    """A metric has no value for the given data (e.g. zero variance)."""


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass
class FrameResult:
    gts: list = field(default_factory=list)
    dets: list = field(default_factory=list)


@dataclass(frozen=True)
class Match:
    det_index: int
    score: float
    tp: bool
    gt_index: Optional[int] = None
    iou: float = 0.0
    dyaw: float = 0.0


@dataclass
class FrameMatch:
    matches: list  # per detection, input order
    gt_matched: list


@dataclass
class EvalSummary:
    ap: dict
    aos: dict
    pearson_r: Optional[float]
    counts: dict
    iou_kind: str = "bev"

    def to_dict(self) -> dict:
        key = lambda t: f"{t:g}"
        return {
            "iou_kind": self.iou_kind,
            "ap": {key(t): v for t, v in self.ap.items()},
            "aos": {key(t): v for t, v in self.aos.items()},
            "pearson_r": self.pearson_r,
            "counts": {key(t): v for t, v in self.counts.items()},
        }

    def format_table(self) -> str:
        rows = [("iou_thr", "AP@40", "AOS@40", "TP", "FP", "FN")]
        for t in self.ap:
            c = self.counts[t]
            rows.append((f"{t:g}", f"{self.ap[t]:.6g}", f"{self.aos[t]:.6g}",
                         str(c["tp"]), str(c["fp"]), str(c["fn"])))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
        r = "undefined" if self.pearson_r is None else f"{self.pearson_r:.6g}"
        lines.append(f"iou kind: {self.iou_kind}   confidence-IoU pearson r: {r}")
        return "\n".join(lines)


def _check_kind(kind):
    if kind not in IOU_KINDS:
        raise ValueError(f"unknown IoU kind {kind!r}; expected one of {IOU_KINDS}")


def _score_order(scores) -> np.ndarray:
    # stable descending sort: ties keep input order
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def nms(dets: Sequence[Detection], iou_thr: float, iou_kind: str = "bev") -> list[Detection]:
    """Greedy non-maximum suppression; drops boxes with IoU > ``iou_thr`` to a kept one."""
    _check_kind(iou_kind)
    if not dets:
        return []
    keep = nms_indices(boxes_to_array(d.box for d in dets), [d.score for d in dets], iou_thr, iou_kind)
    return [dets[i] for i in keep]


def nms_indices(boxes: np.ndarray, scores, iou_thr: float, iou_kind: str = "bev") -> list[int]:
    """Array form of :func:`nms`; returns kept indices in descending score order."""
    if not 0.0 <= iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in [0, 1], got {iou_thr}")
    order = _score_order(scores)
    if len(order) == 0:
        return []
    ious = iou_matrix(boxes[order], boxes[order], iou_kind)
    suppressed = np.zeros(len(order), dtype=bool)
    keep = []
    for i in range(len(order)):
        if suppressed[i]:
            continue
        keep.append(int(order[i]))
        suppressed |= ious[i] > iou_thr
    return keep


def match_frame(frame: FrameResult, iou_thr: float, iou_kind: str = "bev") -> FrameMatch:
    """Greedy score-ordered matching of detections to ground truths.

    A detection is a true positive when the unmatched ground truth it overlaps
    most has IoU >= ``iou_thr``. Each ground truth absorbs at most one
    detection.
    """
    _check_kind(iou_kind)
    dets = frame.dets
    n_gt = len(frame.gts)
    gt_matched = [False] * n_gt
    matches: list = [None] * len(dets)
    if dets and n_gt:
        ious = iou_matrix([d.box for d in dets], frame.gts, iou_kind)
    for i in _score_order([d.score for d in dets]):
        i = int(i)
        d = dets[i]
        best, best_iou = None, -1.0
        for j in range(n_gt):
            if not gt_matched[j] and ious[i, j] > best_iou:
                best, best_iou = j, float(ious[i, j])
        if best is not None and best_iou >= iou_thr:
            gt_matched[best] = True
            dyaw = wrap_angle(d.box.yaw - frame.gts[best].yaw)
            matches[i] = Match(i, d.score, True, best, best_iou, dyaw)
        else:
            matches[i] = Match(i, d.score, False)
    return FrameMatch(matches, gt_matched)


def _pooled(frames, iou_thr, iou_kind):
    n_gt = sum(len(f.gts) for f in frames)
    if n_gt == 0:
        raise EvaluationError("AP is undefined without ground-truth boxes")
    matches = [m for f in frames for m in match_frame(f, iou_thr, iou_kind).matches]
    order = _score_order([m.score for m in matches])
    return n_gt, [matches[i] for i in order]


def _curve_average(n_gt, tp_flags, numer):
    """Mean over recall k/40 of the best ``numer/rank`` at recall >= k/40."""
    if len(tp_flags) == 0:
        return 0.0
    tp_cum = np.cumsum(tp_flags)
    rank = np.arange(1, len(tp_flags) + 1)
    prec = np.cumsum(numer) / rank
    # running max from the right
    best = np.maximum.accumulate(prec[::-1])[::-1]
    total = 0.0
    for k in range(1, N_RECALL + 1):
        # recall >= k/40  <=>  40 tp >= k n_gt, in integers
        idx = np.searchsorted(N_RECALL * tp_cum, k * n_gt, side="left")
        if idx < len(best):
            total += float(best[idx])
    return total / N_RECALL


def ap40(frames: Sequence[FrameResult], iou_thr: float, iou_kind: str = "bev") -> float:
    n_gt, ranked = _pooled(frames, iou_thr, iou_kind)
    tp = np.array([m.tp for m in ranked], dtype=np.int64)
    return _curve_average(n_gt, tp, tp.astype(np.float64))


def orientation_similarity(dyaw: float) -> float:
    return 0.5 * (1.0 + math.cos(dyaw))


def aos40(frames: Sequence[FrameResult], iou_thr: float, iou_kind: str = "bev") -> float:
    """AP-style average where each true positive counts ``(1 + cos dyaw) / 2``."""
    n_gt, ranked = _pooled(frames, iou_thr, iou_kind)
    tp = np.array([m.tp for m in ranked], dtype=np.int64)
    sim = np.array([orientation_similarity(m.dyaw) if m.tp else 0.0 for m in ranked])
    return _curve_average(n_gt, tp, sim)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise UndefinedMetric("correlation needs at least two matched detections")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetric("correlation is undefined for zero variance")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def confidence_iou_correlation(frames: Sequence[FrameResult], iou_kind: str = "bev",
                               iou_thr: float = 0.5) -> float:
    """Pearson r between score and matched-gt IoU over true positives.

    Raises:
        UndefinedMetric: fewer than two true positives, or no variance.
    """
    scores, ious = [], []
    for f in frames:
        for m in match_frame(f, iou_thr, iou_kind).matches:
            if m.tp:
                scores.append(m.score)
                ious.append(m.iou)
    return pearson(scores, ious)


def evaluate(frames: Sequence[FrameResult], thresholds=(0.7, 0.5), iou_kind: str = "bev",
             corr_iou_thr: Optional[float] = None) -> EvalSummary:
    _check_kind(iou_kind)
    ap, aos, counts = {}, {}, {}
    n_gt = sum(len(f.gts) for f in frames)
    for t in thresholds:
        t = float(t)
        ap[t] = ap40(frames, t, iou_kind)
        aos[t] = aos40(frames, t, iou_kind)
        tp = fp = 0
        for f in frames:
            for m in match_frame(f, t, iou_kind).matches:
                tp += m.tp
                fp += not m.tp
        counts[t] = {"tp": tp, "fp": fp, "fn": n_gt - tp}
    if corr_iou_thr is None:
        corr_iou_thr = min(float(t) for t in thresholds)
    try:
        r = confidence_iou_correlation(frames, iou_kind, corr_iou_thr)
    except UndefinedMetric:
        r = None
    return EvalSummary(ap, aos, r, counts, iou_kind)
