"""Serialization of evaluation reports: JSON, text table, CSV, SVG.

JSON output is deterministic (sorted keys, repr-exact floats) so golden
files can be compared byte for byte. The curve SVGs are hand-written
polyline plots, which keeps them free of renderer-version noise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .evaluation import ClassReport, EvalReport, F1Curve, PRCurve

SCHEMA_ID = "fracdet-eval-report/v1"


def _class_report_dict(r: ClassReport) -> dict:
    return {
        "name": r.name,
        "images": r.images,
        "boxes": r.boxes,
        "instances": r.instances,
        "precision": r.precision,
        "recall": r.recall,
        "ap50": r.ap50,
        "ap50_95": r.ap50_95,
    }


def _pr_curve_dict(c: PRCurve) -> dict:
    return {
        # the anchor point has no finite threshold; JSON carries null
        "thresholds": [None if math.isinf(t) else t for t in c.thresholds],
        "recall": list(c.recalls),
        "precision": list(c.precisions),
    }


def _f1_curve_dict(c: F1Curve) -> dict:
    return {
        "thresholds": list(c.thresholds),
        "f1": list(c.f1),
        "best_confidence": c.best_confidence,
        "best_f1": c.best_f1,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "schema": SCHEMA_ID,
        "conventions": dict(report.conventions),
        "overall": _class_report_dict(report.overall),
        "classes": [_class_report_dict(r) for r in report.classes],
        "curves": {
            "pr": {name: _pr_curve_dict(c) for name, c in report.pr_curves.items()},
            "f1": {name: _f1_curve_dict(c) for name, c in report.f1_curves.items()},
        },
    }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"


def render_table(report: EvalReport) -> str:
    """Fixed-width per-class table with the overall row first."""
    header = f"{'Class':<22}{'Images':>8}{'Boxes':>8}{'Instances':>10}{'Precision':>11}{'Recall':>8}{'mAP50':>8}{'mAP50-95':>10}"
    lines = [header]
    for r in (report.overall, *report.classes):
        lines.append(
            f"{r.name:<22}{r.images:>8}{r.boxes:>8}{r.instances:>10}"
            f"{r.precision:>11.3f}{r.recall:>8.3f}{r.ap50:>8.3f}{r.ap50_95:>10.3f}"
        )
    return "\n".join(lines) + "\n"


def _curve_order(report: EvalReport) -> list[str]:
    names = [r.name for r in report.classes]
    return ["overall"] + names


def pr_curves_csv(report: EvalReport) -> str:
    """Rows class,recall,precision; per class one row per sweep point."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "recall", "precision"])
    for name in _curve_order(report):
        c = report.pr_curves[name]
        for r, p in zip(c.recalls, c.precisions):
            writer.writerow([name, repr(r), repr(p)])
    return buf.getvalue()


def f1_curves_csv(report: EvalReport) -> str:
    """Rows class,confidence,f1; per class one row per distinct confidence."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "confidence", "f1"])
    for name in _curve_order(report):
        c = report.f1_curves[name]
        for t, v in zip(c.thresholds, c.f1):
            writer.writerow([name, repr(t), repr(v)])
    return buf.getvalue()


def curve_svg(points: list[tuple[float, float]], x_label: str, y_label: str, title: str) -> str:
    """Minimal SVG 1.1 line plot of points in [0, 1] x [0, 1]."""
    width, height = 480, 360
    ml, mr, mt, mb = 50, 15, 30, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x: float) -> float:
        return ml + x * pw

    def sy(y: float) -> float:
        return mt + (1.0 - y) * ph

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="11">{x_label}</text>',
        f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {mt + ph / 2:.1f})">{y_label}</text>',
    ]
    for i in range(5):
        v = i / 4.0
        parts.append(
            f'<line x1="{sx(v):.1f}" y1="{mt + ph}" x2="{sx(v):.1f}" y2="{mt + ph + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{sx(v):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{v:.2f}</text>'
        )
        parts.append(
            f'<line x1="{ml - 4}" y1="{sy(v):.1f}" x2="{ml}" y2="{sy(v):.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 7}" y="{sy(v) + 3.5:.1f}" text-anchor="end" font-size="10">{v:.2f}</text>'
        )
    if points:
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def write_curve_files(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Emit pr_curve.csv, f1_curve.csv and one SVG per class plus overall."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "pr_curve.csv"
    p.write_text(pr_curves_csv(report), encoding="utf-8")
    written.append(p)
    p = out / "f1_curve.csv"
    p.write_text(f1_curves_csv(report), encoding="utf-8")
    written.append(p)

    for name in _curve_order(report):
        c = report.pr_curves[name]
        svg = curve_svg(
            list(zip(c.recalls, c.precisions)), "recall", "precision", f"P-R curve: {name}"
        )
        p = out / f"pr_curve_{_safe_name(name)}.svg"
        p.write_text(svg, encoding="utf-8")
        written.append(p)

        f = report.f1_curves[name]
        svg = curve_svg(
            list(zip(f.thresholds, f.f1)), "confidence", "F1", f"F1-confidence curve: {name}"
        )
        p = out / f"f1_curve_{_safe_name(name)}.svg"
        p.write_text(svg, encoding="utf-8")
        written.append(p)
    return written
