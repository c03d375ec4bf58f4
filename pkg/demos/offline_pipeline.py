#!/usr/bin/env python3
"""Walkthrough of the offline loop: generate a throwaway model, predict on
synthetic X-ray-sized images, score the detections, and export curves.

Run from the repo root:  python3 demos/offline_pipeline.py
Everything lands in demos/_out/.
"""

import sys
from pathlib import Path

import numpy as np
import cv2

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "scripts"))

from make_tiny_model import build_fixed_model  # noqa: E402

from fracdet.evaluation import evaluate  # noqa: E402
from fracdet.geometry import Box  # noqa: E402
from fracdet.inference import load_model, predict  # noqa: E402
from fracdet.reporting import render_table, write_curve_files  # noqa: E402

out_dir = REPO / "demos" / "_out"
out_dir.mkdir(exist_ok=True)

# A model whose output is a known constant: two boxes on the 64px canvas.
boxes = [(8.0, 12.0, 40.0, 48.0, 0), (30.0, 20.0, 60.0, 56.0, 1)]
model_path = out_dir / "demo.onnx"
model_path.write_bytes(build_fixed_model(64, 2, 16, boxes))
print(f"model: {model_path}")

session = load_model(model_path, class_names=["fracture", "metal"])
print(f"loaded: input {session.input_size}px, reg_max {session.reg_max}, "
      f"classes {session.class_names}")

# Predict on a couple of synthetic grayscale images.
rng = np.random.RandomState(0)
preds = {}
for name in ("case01", "case02"):
    gray = rng.randint(40, 200, size=(64, 64), dtype=np.uint8)
    image = cv2.cvtColor(gray, cv2.COLOR_GRAY2BGR)
    result = predict(session, image, conf=0.25, iou=0.45)
    preds[name] = list(result.detections)
    t = result.timing
    print(f"{name}: {len(result.detections)} detections | "
          f"pre {t.preprocess_ms:.2f} ms, inf {t.inference_ms:.2f} ms, "
          f"post {t.postprocess_ms:.2f} ms, total {t.total_ms:.2f} ms")

# Score against ground truth equal to what the model emits (plus one miss).
gts = {
    "case01": [(Box(8, 12, 40, 48), 0), (Box(30, 20, 60, 56), 1)],
    "case02": [(Box(8, 12, 40, 48), 0), (Box(30, 20, 60, 56), 1), (Box(2, 2, 12, 12), 0)],
}
report = evaluate(preds, gts, ["fracture", "metal"])
print()
print(render_table(report), end="")

written = write_curve_files(report, out_dir / "curves")
print(f"\ncurves: {len(written)} files under {out_dir / 'curves'}")
