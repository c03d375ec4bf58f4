"""Detection metrics: greedy matching, P-R curves, AP, mAP, F-scores.

Matching is per-image and per-class: detections are visited by descending
confidence and consume at most one ground truth each. Average precision
uses the 101-point monotone-envelope sampling; the tabular
precision/recall operating point is the per-class F1-optimal confidence.
Classes absent from the ground truth are excluded from overall means.

All arithmetic here is plain Python floats with math.fsum reductions, so
results are reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import FracdetError
from .decode import Detection
from .geometry import Box, iou

IOU_THRESHOLDS_50_95 = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = tuple(i / 100.0 for i in range(101))
_GRID_EPS = 1e-12


class EvaluationError(FracdetError):
    """Prediction/ground-truth sets are inconsistent."""


GroundTruth = tuple[Box, int]


@dataclass
class MatchResult:
    """Per-detection (confidence, TP flag, class id) plus ground-truth counts."""

    records: list[tuple[float, bool, int]] = field(default_factory=list)
    gt_counts: dict[int, int] = field(default_factory=dict)

    def extend(self, other: "MatchResult") -> None:
        self.records.extend(other.records)
        for cls, n in other.gt_counts.items():
            self.gt_counts[cls] = self.gt_counts.get(cls, 0) + n


@dataclass(frozen=True)
class PRCurve:
    """Sweep over distinct confidences, highest first. The first point is
    the empty-threshold anchor (recall 0, precision 1, threshold inf)."""

    thresholds: tuple[float, ...]
    recalls: tuple[float, ...]
    precisions: tuple[float, ...]


@dataclass(frozen=True)
class F1Curve:
    thresholds: tuple[float, ...]
    f1: tuple[float, ...]
    precisions: tuple[float, ...]
    recalls: tuple[float, ...]
    best_confidence: float | None
    best_f1: float
    best_precision: float
    best_recall: float


@dataclass(frozen=True)
class ClassReport:
    name: str
    images: int
    boxes: int
    instances: int
    precision: float
    recall: float
    ap50: float
    ap50_95: float


@dataclass(frozen=True)
class MapResult:
    map50: float
    map50_95: float
    thresholds: tuple[float, ...]
    per_threshold_map: tuple[float, ...]
    per_class_ap: dict[int, tuple[float, ...]]


@dataclass(frozen=True)
class EvalReport:
    classes: tuple[ClassReport, ...]
    overall: ClassReport
    pr_curves: dict[str, PRCurve]
    f1_curves: dict[str, F1Curve]
    conventions: dict[str, str]


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thresh: float,
) -> MatchResult:
    """Label one image's detections TP/FP against its ground truths.

    A detection is TP iff the highest-IoU not-yet-consumed ground truth of
    its class reaches iou_thresh; ties prefer the lowest ground-truth
    index. Records keep the detection input order.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = [False] * len(gts)
    is_tp = [False] * len(dets)
    for i in order:
        d = dets[i]
        best_iou = 0.0
        best_j = -1
        for j, (gbox, gcls) in enumerate(gts):
            if taken[j] or gcls != d.class_id:
                continue
            ov = iou(d.box, gbox)
            if ov > best_iou:
                best_iou = ov
                best_j = j
        if best_j >= 0 and best_iou >= iou_thresh:
            taken[best_j] = True
            is_tp[i] = True

    result = MatchResult()
    result.records = [(d.confidence, is_tp[i], d.class_id) for i, d in enumerate(dets)]
    for _, gcls in gts:
        result.gt_counts[gcls] = result.gt_counts.get(gcls, 0) + 1
    return result


def _sweep(records: list[tuple[float, bool]], gt_count: int):
    """Cumulative (threshold, tp, fp) at every distinct confidence, descending."""
    ordered = sorted(range(len(records)), key=lambda i: (-records[i][0], i))
    out = []
    tp = fp = 0
    k = 0
    while k < len(ordered):
        conf = records[ordered[k]][0]
        while k < len(ordered) and records[ordered[k]][0] == conf:
            if records[ordered[k]][1]:
                tp += 1
            else:
                fp += 1
            k += 1
        out.append((conf, tp, fp))
    return out


def _select(m: MatchResult, class_id: int | None):
    if class_id is None:
        records = [(c, tp) for c, tp, _ in m.records]
        gt_count = sum(m.gt_counts.values())
    else:
        records = [(c, tp) for c, tp, cls in m.records if cls == class_id]
        gt_count = m.gt_counts.get(class_id, 0)
    return records, gt_count


def pr_curve(m: MatchResult, class_id: int | None = None) -> PRCurve:
    """Precision/recall at every distinct confidence (one class, or pooled
    across classes when class_id is None). Precision is 1 when no
    detections pass the threshold, recall 0 when there is no ground truth."""
    records, gt_count = _select(m, class_id)
    thresholds = [math.inf]
    recalls = [0.0]
    precisions = [1.0]
    for conf, tp, fp in _sweep(records, gt_count):
        thresholds.append(conf)
        precisions.append(tp / (tp + fp) if tp + fp > 0 else 1.0)
        recalls.append(tp / gt_count if gt_count > 0 else 0.0)
    return PRCurve(tuple(thresholds), tuple(recalls), tuple(precisions))


def average_precision(curve: PRCurve) -> float:
    """Area under the monotone precision envelope, sampled at the 101
    evenly spaced recall points 0.00..1.00. The synthetic anchor point
    (infinite threshold) carries no detections and is excluded."""
    recalls = []
    precisions = []
    for t, r, p in zip(curve.thresholds, curve.recalls, curve.precisions):
        if math.isinf(t):
            continue
        recalls.append(r)
        precisions.append(p)
    if not recalls:
        return 0.0
    # suffix max over the sweep = envelope from the right (recalls ascend)
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    samples = []
    for r in RECALL_GRID:
        idx = bisect_left(recalls, r - _GRID_EPS)
        samples.append(envelope[idx] if idx < len(envelope) else 0.0)
    return math.fsum(samples) / len(samples)


def f_beta(p: float, r: float, beta: float) -> float:
    """(1 + beta^2) * p * r / (beta^2 * p + r); 0 on a zero denominator."""
    if not (0.0 <= p <= 1.0) or not (0.0 <= r <= 1.0):
        raise ValueError("precision and recall must lie in [0, 1]")
    if beta <= 0:
        raise ValueError("beta must be positive")
    denom = beta * beta * p + r
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * p * r / denom


def f1_curve(m: MatchResult, class_id: int | None = None) -> F1Curve:
    """F1 at every distinct confidence plus the best operating point.

    Ties in F1 resolve to the highest confidence. With no detections the
    curve is empty and the best point degenerates to (None, 0, 0, 0).
    """
    records, gt_count = _select(m, class_id)
    thresholds = []
    f1s = []
    precisions = []
    recalls = []
    best = (-1.0, None, 0.0, 0.0)  # (f1, conf, p, r)
    for conf, tp, fp in _sweep(records, gt_count):
        p = tp / (tp + fp) if tp + fp > 0 else 1.0
        r = tp / gt_count if gt_count > 0 else 0.0
        f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        thresholds.append(conf)
        f1s.append(f1)
        precisions.append(p)
        recalls.append(r)
        if f1 > best[0]:
            best = (f1, conf, p, r)
    if best[1] is None:
        return F1Curve((), (), (), (), None, 0.0, 0.0, 0.0)
    return F1Curve(
        tuple(thresholds),
        tuple(f1s),
        tuple(precisions),
        tuple(recalls),
        best[1],
        best[0],
        best[2],
        best[3],
    )


def _pooled_match(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[GroundTruth]],
    iou_thresh: float,
) -> MatchResult:
    pooled = MatchResult()
    for image_id in sorted(gts_by_image):
        dets = preds_by_image.get(image_id, [])
        pooled.extend(match_detections(dets, gts_by_image[image_id], iou_thresh))
    return pooled


def map_range(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[GroundTruth]],
    lo: float = 0.5,
    hi: float = 0.95,
    step: float = 0.05,
) -> MapResult:
    """AP per class per IoU threshold in {lo, lo+step, ..., hi}, averaged
    per class then over the classes present in the ground truth."""
    if lo > hi or step <= 0:
        raise ValueError("need lo <= hi and positive step")
    thresholds = tuple(round(lo + i * step, 10) for i in range(int(round((hi - lo) / step)) + 1))

    present = sorted(
        {cls for gts in gts_by_image.values() for _, cls in gts}
    )
    per_class_ap: dict[int, list[float]] = {cls: [] for cls in present}
    for thr in thresholds:
        pooled = _pooled_match(preds_by_image, gts_by_image, thr)
        for cls in present:
            per_class_ap[cls].append(average_precision(pr_curve(pooled, cls)))

    if present:
        per_threshold_map = tuple(
            math.fsum(per_class_ap[cls][i] for cls in present) / len(present)
            for i in range(len(thresholds))
        )
        map50_95 = math.fsum(
            math.fsum(aps) / len(aps) for aps in per_class_ap.values()
        ) / len(present)
        map50 = per_threshold_map[0] if thresholds[0] == 0.5 else math.nan
    else:
        per_threshold_map = tuple(0.0 for _ in thresholds)
        map50 = 0.0
        map50_95 = 0.0
    return MapResult(
        map50=map50,
        map50_95=map50_95,
        thresholds=thresholds,
        per_threshold_map=per_threshold_map,
        per_class_ap={cls: tuple(aps) for cls, aps in per_class_ap.items()},
    )


def evaluate(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[GroundTruth]],
    class_names: Sequence[str],
) -> EvalReport:
    """Per-class and overall report plus P-R and F1 curves.

    Images present only in the ground truth contribute misses; images with
    empty ground truth contribute false positives. Prediction image ids
    unknown to the ground truth are an error.
    """
    unknown = sorted(set(preds_by_image) - set(gts_by_image))
    if unknown:
        raise EvaluationError(
            "prediction image ids missing from ground truth: " + ", ".join(unknown)
        )

    maps = map_range(preds_by_image, gts_by_image)
    pooled50 = _pooled_match(preds_by_image, gts_by_image, 0.5)

    n_images = len(gts_by_image)
    instances: dict[int, int] = {}
    for gts in gts_by_image.values():
        for cls in {cls for _, cls in gts}:
            instances[cls] = instances.get(cls, 0) + 1

    present = sorted(maps.per_class_ap)
    class_reports = []
    pr_curves: dict[str, PRCurve] = {}
    f1_curves: dict[str, F1Curve] = {}
    for cls, name in enumerate(class_names):
        curve = pr_curve(pooled50, cls)
        f1c = f1_curve(pooled50, cls)
        pr_curves[name] = curve
        f1_curves[name] = f1c
        aps = maps.per_class_ap.get(cls)
        class_reports.append(
            ClassReport(
                name=name,
                images=n_images,
                boxes=pooled50.gt_counts.get(cls, 0),
                instances=instances.get(cls, 0),
                precision=f1c.best_precision,
                recall=f1c.best_recall,
                ap50=aps[0] if aps else 0.0,
                ap50_95=math.fsum(aps) / len(aps) if aps else 0.0,
            )
        )

    pr_curves["overall"] = pr_curve(pooled50, None)
    f1_curves["overall"] = f1_curve(pooled50, None)

    present_reports = [class_reports[cls] for cls in present if cls < len(class_names)]
    n_present = len(present_reports)
    overall = ClassReport(
        name="overall",
        images=n_images,
        boxes=sum(r.boxes for r in class_reports),
        instances=sum(r.instances for r in class_reports),
        precision=math.fsum(r.precision for r in present_reports) / n_present if n_present else 0.0,
        recall=math.fsum(r.recall for r in present_reports) / n_present if n_present else 0.0,
        ap50=maps.map50,
        ap50_95=maps.map50_95,
    )
    return EvalReport(
        classes=tuple(class_reports),
        overall=overall,
        pr_curves=pr_curves,
        f1_curves=f1_curves,
        conventions={
            "operating_point": "per-class F1-optimal confidence",
            "ap_interpolation": "101-point monotone envelope",
            "overall_mean": "arithmetic mean over classes present in ground truth",
            "overall_curves": "detections pooled across classes",
        },
    )
