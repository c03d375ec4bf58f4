"""Training-time mathematics of the anchor-free detector, verified numerically.

Covers the task-aligned sample-selection metric, binary cross-entropy,
distribution focal loss over discrete distance bins, and the complete-IoU
box loss. Every loss returns its value together with the analytic gradient
so the formulas can be checked against finite differences.

No training loop lives here: the losses are exposed separately and never
combined, and nothing backpropagates through a network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geometry import ASPECT_EPS, Box, iou

# Clamp applied wherever a logarithm or division by a probability appears.
LOG_EPS = 1e-7

NEGATIVE = -1


@dataclass(frozen=True)
class RegDistribution:
    """Discrete probability distribution over integer distance bins 0..reg_max."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) < 2:
            raise ValueError("distribution needs at least two bins")
        for i, p in enumerate(self.probs):
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"bin {i} probability {p} outside [0, 1]")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    @property
    def reg_max(self) -> int:
        return len(self.probs) - 1


@dataclass(frozen=True)
class AlignmentParams:
    """Exponents weighting classification score vs localization quality."""

    alpha: float = 0.5
    beta: float = 6.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alignment exponents must be positive")


@dataclass(frozen=True)
class AssignmentResult:
    """Per-anchor assignment: ground-truth index (NEGATIVE if none) and the
    alignment score t of that assignment (0 for negatives)."""

    gt_indices: tuple[int, ...]
    alignment: tuple[float, ...]

    def positives(self) -> list[int]:
        return [i for i, g in enumerate(self.gt_indices) if g != NEGATIVE]


def tal_metric(score: float, overlap: float, params: AlignmentParams) -> float:
    """Task-alignment metric t = score**alpha * overlap**beta."""
    if not (0.0 <= score <= 1.0) or not (0.0 <= overlap <= 1.0):
        raise ValueError("score and overlap must lie in [0, 1]")
    return score**params.alpha * overlap**params.beta


def bce_loss(x: float, y: float, w: float = 1.0) -> tuple[float, float]:
    """Weighted binary cross-entropy and its derivative in the prediction.

    The prediction is clamped to [LOG_EPS, 1 - LOG_EPS]; inside the clamp
    the derivative is -w * (y/x - (1-y)/(1-x)), outside it is 0.
    """
    xc = min(max(x, LOG_EPS), 1.0 - LOG_EPS)
    loss = -w * (y * math.log(xc) + (1.0 - y) * math.log(1.0 - xc))
    if LOG_EPS < x < 1.0 - LOG_EPS:
        grad = -w * (y / x - (1.0 - y) / (1.0 - x))
    else:
        grad = 0.0
    return loss, grad


def dfl_target_bins(y: float, reg_max: int) -> tuple[int, int]:
    """The two integer bins bracketing a continuous target in [0, reg_max]."""
    if not (0.0 <= y <= reg_max):
        raise ValueError(f"target {y} outside [0, {reg_max}]")
    lo = int(math.floor(y))
    if lo == reg_max:
        lo = reg_max - 1
    return lo, lo + 1


def dfl_loss(dist: RegDistribution, y: float) -> tuple[float, tuple[float, ...]]:
    """Distribution focal loss and its gradient in the bin probabilities.

    loss = -((y_hi - y) * ln p[y_lo] + (y - y_lo) * ln p[y_hi]) with the two
    probabilities clamped at LOG_EPS. Only the two bracketing bins carry
    gradient; a clamped bin's gradient is 0 (the clamp is flat).
    """
    lo, hi = dfl_target_bins(y, dist.reg_max)
    w_lo = hi - y
    w_hi = y - lo
    p_lo = dist.probs[lo]
    p_hi = dist.probs[hi]
    loss = -(w_lo * math.log(max(p_lo, LOG_EPS)) + w_hi * math.log(max(p_hi, LOG_EPS)))
    grad = [0.0] * len(dist.probs)
    if p_lo >= LOG_EPS:
        grad[lo] = -w_lo / p_lo
    if p_hi >= LOG_EPS:
        grad[hi] = -w_hi / p_hi
    return loss, tuple(grad)


def dfl_optimal_targets(y: float, y_lo: float, y_hi: float) -> tuple[float, float]:
    """Probability pair on the two bracketing bins that minimizes the loss:
    ((y_hi - y)/(y_hi - y_lo), (y - y_lo)/(y_hi - y_lo))."""
    if not (y_lo <= y <= y_hi):
        raise ValueError(f"target {y} outside bin interval [{y_lo}, {y_hi}]")
    span = y_hi - y_lo
    return (y_hi - y) / span, (y - y_lo) / span


def ciou_loss(pred: Box, gt: Box) -> tuple[float, tuple[float, float, float, float]]:
    """Complete-IoU loss and its analytic gradient in the predicted corners.

    loss = 1 - IoU + d^2/c^2 + v^2 / ((1 - IoU) + v)
    where d^2 is the squared center distance, c^2 the squared enclosing-box
    diagonal, and v the aspect-consistency term. The gradient differentiates
    the formula as written, chaining through IoU, d^2, c^2 and v; min/max
    selections contribute their one-sided derivatives.
    """
    px1, py1, px2, py2 = pred.x1, pred.y1, pred.x2, pred.y2
    gx1, gy1, gx2, gy2 = gt.x1, gt.y1, gt.x2, gt.y2

    # --- IoU and its gradient -------------------------------------------
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    wp = px2 - px1
    hp = py2 - py1
    area_p = wp * hp
    area_g = (gx2 - gx1) * (gy2 - gy1)

    d_area_p = (-hp, -wp, hp, wp)  # d area_p / d (x1, y1, x2, y2)

    if iw > 0.0 and ih > 0.0:
        inter = iw * ih
        d_inter = (
            -ih if px1 > gx1 else 0.0,
            -iw if py1 > gy1 else 0.0,
            ih if px2 < gx2 else 0.0,
            iw if py2 < gy2 else 0.0,
        )
    else:
        inter = 0.0
        d_inter = (0.0, 0.0, 0.0, 0.0)

    union = area_p + area_g - inter
    if union > 0.0 and inter > 0.0:
        overlap = inter / union
        d_iou = tuple(
            (d_inter[i] * union - inter * (d_area_p[i] - d_inter[i])) / union**2
            for i in range(4)
        )
    else:
        overlap = 0.0
        d_iou = (0.0, 0.0, 0.0, 0.0)

    # --- squared center distance ----------------------------------------
    dx = (px1 + px2) / 2.0 - (gx1 + gx2) / 2.0
    dy = (py1 + py2) / 2.0 - (gy1 + gy2) / 2.0
    dist_sq = dx * dx + dy * dy
    d_dist = (dx, dy, dx, dy)

    # --- squared enclosing diagonal --------------------------------------
    ew = max(px2, gx2) - min(px1, gx1)
    eh = max(py2, gy2) - min(py1, gy1)
    diag_sq = ew * ew + eh * eh
    d_diag = (
        -2.0 * ew if px1 < gx1 else 0.0,
        -2.0 * eh if py1 < gy1 else 0.0,
        2.0 * ew if px2 > gx2 else 0.0,
        2.0 * eh if py2 > gy2 else 0.0,
    )

    # --- aspect term ------------------------------------------------------
    wpe = max(wp, ASPECT_EPS)
    hpe = max(hp, ASPECT_EPS)
    wge = max(gx2 - gx1, ASPECT_EPS)
    hge = max(gy2 - gy1, ASPECT_EPS)
    k = 4.0 / math.pi**2
    delta = math.atan(wge / hge) - math.atan(wpe / hpe)
    v = k * delta * delta
    denom_wh = hpe * hpe + wpe * wpe
    dv_dw = -2.0 * k * delta * hpe / denom_wh if wp > ASPECT_EPS else 0.0
    dv_dh = 2.0 * k * delta * wpe / denom_wh if hp > ASPECT_EPS else 0.0
    d_v = (-dv_dw, -dv_dh, dv_dw, dv_dh)

    # --- assemble ---------------------------------------------------------
    q = (1.0 - overlap) + v
    aspect_penalty = v * v / q if q > 0.0 else 0.0

    loss = 1.0 - overlap + dist_sq / diag_sq + aspect_penalty

    grad = []
    for i in range(4):
        g = -d_iou[i]
        g += (d_dist[i] * diag_sq - dist_sq * d_diag[i]) / diag_sq**2
        if q > 0.0:
            g += ((2.0 * v * q - v * v) * d_v[i] + v * v * d_iou[i]) / q**2
        grad.append(g)
    return loss, tuple(grad)


def _anchor_fields(anchor) -> tuple[float, float, float]:
    if hasattr(anchor, "cx"):
        return anchor.cx, anchor.cy, anchor.stride
    cx, cy, stride = anchor
    return cx, cy, stride


def assign_targets(
    anchors: Sequence,
    scores: Sequence[Sequence[float]],
    pred_boxes: Sequence[Box],
    gts: Sequence[tuple[Box, int]],
    params: AlignmentParams = AlignmentParams(),
    top_k: int = 10,
) -> AssignmentResult:
    """Select positive anchors for each ground truth by the alignment metric.

    Anchors are (cx, cy, stride) triples or objects with those attributes;
    their pixel-space centers are cx*stride, cy*stride. For each ground
    truth, the candidates are the anchors whose center lies inside the box
    (boundary inclusive); the top_k candidates by t = score**alpha *
    iou**beta become positive. An anchor claimed by several ground truths
    goes to the one with the highest t (ties: lowest ground-truth index).
    Ties inside the top-k cut are broken by anchor index.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    n = len(anchors)
    if len(pred_boxes) != n or len(scores) != n:
        raise ValueError("anchors, scores, and pred_boxes must align")

    centers = []
    for a in anchors:
        cx, cy, stride = _anchor_fields(a)
        centers.append((cx * stride, cy * stride))

    best: dict[int, tuple[float, int]] = {}
    for g_idx, (gbox, g_cls) in enumerate(gts):
        scored = []
        for i, (acx, acy) in enumerate(centers):
            if gbox.x1 <= acx <= gbox.x2 and gbox.y1 <= acy <= gbox.y2:
                t = tal_metric(scores[i][g_cls], iou(pred_boxes[i], gbox), params)
                scored.append((t, i))
        scored.sort(key=lambda ti: (-ti[0], ti[1]))
        for t, i in scored[:top_k]:
            cur = best.get(i)
            if cur is None or t > cur[0]:
                best[i] = (t, g_idx)

    gt_indices = [NEGATIVE] * n
    alignment = [0.0] * n
    for i, (t, g_idx) in best.items():
        gt_indices[i] = g_idx
        alignment[i] = t
    return AssignmentResult(tuple(gt_indices), tuple(alignment))
