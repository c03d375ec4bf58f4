"""Box overlays for saved prediction images.

The class -> color map is fixed so images drawn by the CLI, the service
metadata, and the web UI stay comparable across runs.
"""

from __future__ import annotations

from typing import Sequence

import cv2
import numpy as np

from .decode import Detection

# Fixed palette, hex RGB. Classes beyond the palette wrap around.
PALETTE = (
    "#e6194b",
    "#3cb44b",
    "#ffe119",
    "#4363d8",
    "#f58231",
    "#911eb4",
    "#46f0f0",
    "#f032e6",
    "#bcf60c",
    "#fabebe",
    "#008080",
    "#e6beff",
    "#9a6324",
    "#fffac8",
    "#800000",
    "#aaffc3",
    "#808000",
    "#ffd8b1",
    "#000075",
    "#808080",
)


def class_color(class_id: int) -> str:
    return PALETTE[class_id % len(PALETTE)]


def _hex_to_bgr(color: str) -> tuple[int, int, int]:
    r = int(color[1:3], 16)
    g = int(color[3:5], 16)
    b = int(color[5:7], 16)
    return b, g, r


def draw_detections(
    image_bgr: np.ndarray,
    detections: Sequence[Detection],
    class_names: Sequence[str],
) -> np.ndarray:
    """Return a copy of the image with labeled boxes ("name 0.87" style)."""
    out = image_bgr.copy()
    for d in detections:
        color = _hex_to_bgr(class_color(d.class_id))
        x1, y1 = int(round(d.box.x1)), int(round(d.box.y1))
        x2, y2 = int(round(d.box.x2)), int(round(d.box.y2))
        cv2.rectangle(out, (x1, y1), (x2, y2), color, 2)
        name = class_names[d.class_id] if d.class_id < len(class_names) else str(d.class_id)
        label = f"{name} {d.confidence:.2f}"
        (tw, th), baseline = cv2.getTextSize(label, cv2.FONT_HERSHEY_SIMPLEX, 0.5, 1)
        ty = y1 - 4 if y1 - th - baseline - 4 >= 0 else y2 + th + baseline + 4
        cv2.rectangle(out, (x1, ty - th - baseline), (x1 + tw, ty + baseline), color, -1)
        cv2.putText(out, label, (x1, ty), cv2.FONT_HERSHEY_SIMPLEX, 0.5, (255, 255, 255), 1, cv2.LINE_AA)
    return out
