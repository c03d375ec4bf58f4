"""Axis-aligned box types, coordinate conversions, and overlap measures.

Corner (x1, y1, x2, y2) is the canonical internal format; center-based
normalized boxes exist only at I/O boundaries (label files, prediction
dumps). All functions here are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Floor applied to widths/heights inside arctan so the aspect term stays
# finite for degenerate boxes.
ASPECT_EPS = 1e-7


@dataclass(frozen=True)
class Box:
    """Rectangle in pixel corner coordinates, origin top-left."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box corners out of order: {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def clip(self, img_w: float, img_h: float) -> "Box":
        """Clamp the box to the image rectangle [0, img_w] x [0, img_h]."""
        x1 = min(max(self.x1, 0.0), img_w)
        y1 = min(max(self.y1, 0.0), img_h)
        x2 = min(max(self.x2, 0.0), img_w)
        y2 = min(max(self.y2, 0.0), img_h)
        return Box(x1, y1, x2, y2)


@dataclass(frozen=True)
class NormBox:
    """Center/size box as fractions of the image dimensions (label format)."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"normalized box field {name}={v} outside [0, 1]")


@dataclass(frozen=True)
class CiouTerms:
    """The four geometric quantities entering the complete-IoU loss."""

    iou: float
    center_dist_sq: float
    enclose_diag_sq: float
    aspect_term: float


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area.

    Degenerate inputs are total: two zero-area boxes (union 0) give 0.
    No epsilon is folded into the division, so integer-coordinate boxes
    produce exact ratios.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def ciou_terms(pred: Box, gt: Box) -> CiouTerms:
    """Overlap, center distance, enclosing diagonal and aspect penalty.

    center_dist_sq is the squared distance between box centers;
    enclose_diag_sq the squared diagonal of the smallest box covering both;
    aspect_term = (4/pi^2) * (arctan(w_gt/h_gt) - arctan(w_pred/h_pred))^2.
    """
    pcx, pcy = pred.center
    gcx, gcy = gt.center
    center_dist_sq = (pcx - gcx) ** 2 + (pcy - gcy) ** 2

    ew = max(pred.x2, gt.x2) - min(pred.x1, gt.x1)
    eh = max(pred.y2, gt.y2) - min(pred.y1, gt.y1)
    enclose_diag_sq = ew * ew + eh * eh

    wp = max(pred.width, ASPECT_EPS)
    hp = max(pred.height, ASPECT_EPS)
    wg = max(gt.width, ASPECT_EPS)
    hg = max(gt.height, ASPECT_EPS)
    delta = math.atan(wg / hg) - math.atan(wp / hp)
    aspect_term = (4.0 / math.pi**2) * delta * delta

    return CiouTerms(
        iou=iou(pred, gt),
        center_dist_sq=center_dist_sq,
        enclose_diag_sq=enclose_diag_sq,
        aspect_term=aspect_term,
    )


def norm_to_box(n: NormBox, img_w: float, img_h: float) -> Box:
    """Convert a normalized center/size box to pixel corners."""
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {img_w}x{img_h}")
    half_w = n.w * img_w / 2.0
    half_h = n.h * img_h / 2.0
    cx = n.cx * img_w
    cy = n.cy * img_h
    return Box(cx - half_w, cy - half_h, cx + half_w, cy + half_h)


def box_to_norm(b: Box, img_w: float, img_h: float) -> NormBox:
    """Convert pixel corners to the normalized center/size form."""
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {img_w}x{img_h}")
    cx, cy = b.center
    return NormBox(cx / img_w, cy / img_h, b.width / img_w, b.height / img_h)
