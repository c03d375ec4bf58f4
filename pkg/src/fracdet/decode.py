"""Decoding of raw detector head outputs into pixel-space detections.

The exported models emit one planar block per image: channel-major,
4*(reg_max+1) + num_classes channels by num_anchors columns. The first
4*(reg_max+1) channels hold the left, top, right, bottom distance-bin
logits (one (reg_max+1)-sized group per side, in that order); the rest are
per-class logits. Anchor columns follow the stride-8, stride-16, stride-32
grids concatenated in that order, each grid row-major. There is no
objectness channel: confidence is the maximum sigmoid class score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import FracdetError
from .geometry import Box

DEFAULT_STRIDES = (8, 16, 32)
DEFAULT_REG_MAX = 16
DEFAULT_CONF_THRESH = 0.25
DEFAULT_IOU_THRESH = 0.45
MAX_DETECTIONS = 300


class LayoutError(FracdetError):
    """Raw output does not match the documented channel/anchor layout."""


@dataclass(frozen=True)
class LetterboxTransform:
    """Aspect-preserving resize onto a square canvas with centered padding."""

    scale: float
    pad_x: int
    pad_y: int
    orig_w: int
    orig_h: int
    target: int


@dataclass(frozen=True)
class AnchorPoint:
    """Grid-cell center in feature-map units plus its pixel stride."""

    cx: float
    cy: float
    stride: int


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    confidence: float


@dataclass(frozen=True)
class RawPrediction:
    """Planar raw head output for one image plus its layout parameters."""

    values: np.ndarray
    reg_max: int
    num_classes: int

    def __post_init__(self):
        channels = 4 * (self.reg_max + 1) + self.num_classes
        v = self.values
        if v.ndim == 1:
            if v.size % channels != 0:
                raise LayoutError(
                    f"raw output has {v.size} elements, not divisible by "
                    f"{channels} channels (reg_max={self.reg_max}, "
                    f"classes={self.num_classes})"
                )
            object.__setattr__(self, "values", v.reshape(channels, -1))
        elif v.ndim == 2:
            if v.shape[0] != channels:
                raise LayoutError(
                    f"raw output has {v.shape[0]} channels, expected {channels} "
                    f"(reg_max={self.reg_max}, classes={self.num_classes})"
                )
        else:
            raise LayoutError(f"raw output must be 1-D or 2-D, got shape {v.shape}")

    @property
    def num_anchors(self) -> int:
        return self.values.shape[1]


def letterbox(orig_w: int, orig_h: int, target: int, stride_multiple: int = 32) -> LetterboxTransform:
    """Compute the scale and integer padding placing an image on a square canvas."""
    if orig_w <= 0 or orig_h <= 0 or target <= 0:
        raise ValueError(f"dimensions must be positive, got {orig_w}x{orig_h} -> {target}")
    if target % stride_multiple != 0:
        raise ValueError(f"target {target} not a multiple of {stride_multiple}")
    scale = min(target / orig_w, target / orig_h)
    new_w = round(orig_w * scale)
    new_h = round(orig_h * scale)
    return LetterboxTransform(
        scale=scale,
        pad_x=(target - new_w) // 2,
        pad_y=(target - new_h) // 2,
        orig_w=orig_w,
        orig_h=orig_h,
        target=target,
    )


def apply_letterbox(b: Box, t: LetterboxTransform) -> Box:
    """Map a box from original-image to letterboxed-canvas coordinates."""
    return Box(
        b.x1 * t.scale + t.pad_x,
        b.y1 * t.scale + t.pad_y,
        b.x2 * t.scale + t.pad_x,
        b.y2 * t.scale + t.pad_y,
    )


def unletterbox(b: Box, t: LetterboxTransform) -> Box:
    """Map a box from the letterboxed canvas back to original-image pixels,
    clipped to the image bounds. Boxes fully inside the padding collapse to
    zero area and should be discarded by the caller."""
    return Box(
        (b.x1 - t.pad_x) / t.scale,
        (b.y1 - t.pad_y) / t.scale,
        (b.x2 - t.pad_x) / t.scale,
        (b.y2 - t.pad_y) / t.scale,
    ).clip(t.orig_w, t.orig_h)


def make_anchors(input_size: int, strides: Sequence[int] = DEFAULT_STRIDES) -> list[AnchorPoint]:
    """Cell centers (i+0.5, j+0.5) for each stride grid, coarse-to-fine order
    fixed as given (8, 16, 32 by default), each grid row-major."""
    for s in strides:
        if input_size % s != 0:
            raise ValueError(f"input size {input_size} not divisible by stride {s}")
    anchors = []
    for s in strides:
        n = input_size // s
        for j in range(n):
            for i in range(n):
                anchors.append(AnchorPoint(i + 0.5, j + 0.5, s))
    return anchors


def anchor_array(anchors: Sequence[AnchorPoint] | np.ndarray) -> np.ndarray:
    """(num_anchors, 3) float array of cx, cy, stride."""
    if isinstance(anchors, np.ndarray):
        return anchors
    return np.array([(a.cx, a.cy, a.stride) for a in anchors], dtype=np.float64)


def _softmax(logits: np.ndarray, axis: int) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def decode_dfl(side_logits: Sequence[float] | np.ndarray) -> float:
    """Expected distance of one side's bin distribution: softmax then sum(i * p_i)."""
    logits = np.asarray(side_logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise ValueError("side logits must be a 1-D vector of at least two bins")
    probs = _softmax(logits, axis=0)
    return float(np.arange(logits.size) @ probs)


def dist2box(a: AnchorPoint, left: float, top: float, right: float, bottom: float) -> Box:
    """Box from center-to-side distances in feature-map units, scaled to pixels."""
    return Box(
        (a.cx - left) * a.stride,
        (a.cy - top) * a.stride,
        (a.cx + right) * a.stride,
        (a.cy + bottom) * a.stride,
    )


def nms(dets: Sequence[Detection], iou_thresh: float = DEFAULT_IOU_THRESH) -> list[Detection]:
    """Greedy class-aware suppression.

    Detections are visited by descending confidence (ties: input order);
    one is kept iff its IoU with every already-kept detection of the same
    class is strictly below iou_thresh. Output is confidence-sorted.
    """
    if not dets:
        return []
    boxes = np.array(
        [(d.box.x1, d.box.y1, d.box.x2, d.box.y2) for d in dets], dtype=np.float64
    )
    conf = np.array([d.confidence for d in dets])
    cls = np.array([d.class_id for d in dets])

    # offset boxes per class so cross-class pairs can never overlap
    ob = boxes + (boxes.max() + 1.0) * cls[:, None]
    x1, y1, x2, y2 = ob[:, 0], ob[:, 1], ob[:, 2], ob[:, 3]
    areas = (x2 - x1) * (y2 - y1)

    order = np.argsort(-conf, kind="stable")
    keep = []
    while order.size:
        i = order[0]
        keep.append(int(i))
        rest = order[1:]
        iw = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        ih = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
        union = areas[i] + areas[rest] - inter
        overlap = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
        order = rest[overlap < iou_thresh]
    return [dets[i] for i in keep]


def decode_all(
    raw: RawPrediction,
    anchors: Sequence[AnchorPoint] | np.ndarray,
    transform: LetterboxTransform,
    conf_thresh: float = DEFAULT_CONF_THRESH,
    iou_thresh: float = DEFAULT_IOU_THRESH,
    max_det: int = MAX_DETECTIONS,
) -> list[Detection]:
    """Full postprocess: sigmoid class scores, confidence filter, DFL
    expectation per side, center-distance box reconstruction, letterbox
    inversion, class-aware suppression. Deterministic for identical input."""
    grid = anchor_array(anchors)
    if raw.num_anchors != grid.shape[0]:
        channels = 4 * (raw.reg_max + 1) + raw.num_classes
        raise LayoutError(
            f"raw output covers {raw.num_anchors} anchors "
            f"({raw.values.size} elements), expected {grid.shape[0]} anchors "
            f"x {channels} channels = {grid.shape[0] * channels} elements"
        )

    reg_channels = 4 * (raw.reg_max + 1)
    values = np.asarray(raw.values, dtype=np.float64)
    cls_scores = 1.0 / (1.0 + np.exp(-values[reg_channels:, :]))
    conf = cls_scores.max(axis=0)
    class_ids = cls_scores.argmax(axis=0)

    keep = np.flatnonzero(conf >= conf_thresh)
    if keep.size == 0:
        return []

    reg = values[:reg_channels, keep].reshape(4, raw.reg_max + 1, keep.size)
    probs = _softmax(reg, axis=1)
    bins = np.arange(raw.reg_max + 1, dtype=np.float64)
    dist = np.einsum("b,sbk->sk", bins, probs)  # (4, kept) left/top/right/bottom

    cx = grid[keep, 0]
    cy = grid[keep, 1]
    stride = grid[keep, 2]
    x1 = (cx - dist[0]) * stride
    y1 = (cy - dist[1]) * stride
    x2 = (cx + dist[2]) * stride
    y2 = (cy + dist[3]) * stride

    dets = []
    for idx in range(keep.size):
        # DFL expectations are nonnegative, so corners are already ordered
        box = unletterbox(
            Box(float(x1[idx]), float(y1[idx]), float(x2[idx]), float(y2[idx])), transform
        )
        if box.area <= 0.0:
            continue
        dets.append(
            Detection(box=box, class_id=int(class_ids[keep[idx]]), confidence=float(conf[keep[idx]]))
        )
    return nms(dets, iou_thresh)[:max_det]
