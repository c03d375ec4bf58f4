"""Operator command line: split, predict, eval, curves, bench, serve.

Exit codes: 0 success, 1 domain error, 2 usage error. Every failure path
prints a single ``fracdet: error: <reason>`` line to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import FracdetError
from .dataset import (
    IMAGE_SUFFIXES,
    load_image_entries,
    parse_label_file,
    split as split_entries,
    write_manifest,
)
from .decode import Detection
from .evaluation import evaluate
from .geometry import Box, NormBox, norm_to_box

PRED_SUFFIXES = (".txt", ".json")


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ratios {text!r} are not numbers") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("need exactly three ratios: train,val,test")
    if any(r <= 0 for r in parts):
        raise argparse.ArgumentTypeError("ratios must be positive")
    if abs(sum(parts) - 1.0) > 1e-9:
        raise argparse.ArgumentTypeError(f"ratios must sum to 1, got {sum(parts)}")
    return parts


def _class_file(text: str) -> list[str]:
    path = Path(text)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"class file {text} does not exist")
    names = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not names:
        raise argparse.ArgumentTypeError(f"class file {text} is empty")
    return names


def _threshold(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (0.0 < v < 1.0):
        raise argparse.ArgumentTypeError(f"threshold {v} must lie in (0, 1)")
    return v


def _collect_images(target: Path) -> list[Path]:
    if target.is_file():
        return [target]
    if target.is_dir():
        return sorted(p for p in target.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    raise FracdetError(f"input {target} does not exist")


# --- split -------------------------------------------------------------------

def cmd_split(args) -> int:
    entries = load_image_entries(args.images, args.labels)
    manifest = split_entries(
        entries, ratios=args.ratios, seed=args.seed, class_names=args.classes or []
    )
    write_manifest(manifest, args.out)
    total = len(entries)
    parts = []
    for fold in ("train", "val", "test"):
        n = len(manifest.fold(fold))
        parts.append(f"{fold} {n} ({100.0 * n / total:.2f}%)")
    print("  ".join(parts))
    print(f"manifest written to {args.out}")
    return 0


# --- predict -----------------------------------------------------------------

def _predict_payloads(args, inputs: list[Path]):
    from .inference import SessionPool, load_model, predict, result_to_payload

    jobs = max(1, args.jobs if args.jobs else (os.cpu_count() or 1))
    jobs = min(jobs, len(inputs))
    sessions = [
        load_model(args.model, args.classes, args.input_size) for _ in range(jobs)
    ]
    pool = SessionPool(sessions)

    def worker(path: Path):
        try:
            with pool.checkout(timeout=600.0) as session:
                result = predict(session, path, conf=args.conf, iou=args.iou)
            payload = result_to_payload(result, sessions[0].class_names)
            payload["image"] = path.name
            return path, payload, None
        except (FracdetError, OSError) as exc:
            return path, None, str(exc)

    if jobs == 1:
        outcomes = [worker(p) for p in inputs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(worker, inputs))
    return sessions[0], outcomes


def cmd_predict(args) -> int:
    inputs = _collect_images(Path(args.input))
    if not inputs:
        raise FracdetError("no inputs")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    session, outcomes = _predict_payloads(args, inputs)
    failed = 0
    stdout_payloads = []
    for path, payload, error in outcomes:
        if error is not None:
            failed += 1
            print(f"fracdet: error: {path}: {error}", file=sys.stderr)
            continue
        (out_dir / f"{path.stem}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        stdout_payloads.append(payload)
        if args.draw:
            import cv2

            from .drawing import draw_detections
            from .inference import decode_image

            img = decode_image(path)
            dets = [
                Detection(
                    Box(d["box"]["x1"], d["box"]["y1"], d["box"]["x2"], d["box"]["y2"]),
                    d["class_id"],
                    d["confidence"],
                )
                for d in payload["detections"]
            ]
            annotated = draw_detections(img, dets, session.class_names)
            cv2.imwrite(str(out_dir / f"{path.stem}.png"), annotated)
    if args.json:
        print(json.dumps(stdout_payloads, indent=2, sort_keys=True))
    return 1 if failed else 0


# --- eval / curves -------------------------------------------------------------

def _parse_prediction_text(text: str, path: Path) -> list[Detection]:
    dets = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise FracdetError(f"{path}:{lineno}: expected 'class conf cx cy w h'")
        try:
            cls = int(parts[0])
            conf = float(parts[1])
            n = NormBox(*(float(v) for v in parts[2:]))
        except ValueError as exc:
            raise FracdetError(f"{path}:{lineno}: {exc}") from None
        dets.append(Detection(norm_to_box(n, 1.0, 1.0), cls, conf))
    return dets


def _parse_prediction_json(payload: dict, path: Path) -> list[Detection]:
    try:
        w = float(payload["width"])
        h = float(payload["height"])
        dets = []
        for d in payload["detections"]:
            b = d["box"]
            dets.append(
                Detection(
                    Box(b["x1"] / w, b["y1"] / h, b["x2"] / w, b["y2"] / h),
                    int(d["class_id"]),
                    float(d["confidence"]),
                )
            )
        return dets
    except (KeyError, TypeError, ValueError) as exc:
        raise FracdetError(f"{path}: malformed prediction JSON ({exc})") from None


def _load_eval_inputs(pred_dir: Path, gt_dir: Path, class_names: list[str]):
    if not gt_dir.is_dir():
        raise FracdetError(f"ground-truth directory {gt_dir} does not exist")
    if not pred_dir.is_dir():
        raise FracdetError(f"prediction directory {pred_dir} does not exist")

    gts = {}
    for path in sorted(gt_dir.glob("*.txt")):
        records = parse_label_file(path.read_text(encoding="utf-8"), num_classes=len(class_names))
        gts[path.stem] = [(norm_to_box(r.box, 1.0, 1.0), r.class_id) for r in records]

    preds = {}
    pred_files = [p for p in sorted(pred_dir.iterdir()) if p.suffix.lower() in PRED_SUFFIXES]
    orphans = sorted({p.stem for p in pred_files} - set(gts))
    if orphans:
        raise FracdetError(
            "prediction stems without ground truth: " + ", ".join(orphans)
        )
    for path in pred_files:
        if path.suffix.lower() == ".json":
            preds[path.stem] = _parse_prediction_json(
                json.loads(path.read_text(encoding="utf-8")), path
            )
        else:
            preds[path.stem] = _parse_prediction_text(path.read_text(encoding="utf-8"), path)
    return preds, gts


def cmd_eval(args) -> int:
    from .reporting import render_table, report_to_json

    preds, gts = _load_eval_inputs(Path(args.pred), Path(args.gt), args.classes)
    report = evaluate(preds, gts, args.classes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_to_json(report), encoding="utf-8")
    table = render_table(report)
    out.with_suffix(".txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"mAP50 {report.overall.ap50:.3f}  mAP50-95 {report.overall.ap50_95:.3f}")
    return 0


def cmd_curves(args) -> int:
    from .reporting import write_curve_files

    preds, gts = _load_eval_inputs(Path(args.pred), Path(args.gt), args.classes)
    report = evaluate(preds, gts, args.classes)
    written = write_curve_files(report, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


# --- bench ---------------------------------------------------------------------

def cmd_bench(args) -> int:
    from .inference import bench, load_model

    images = _collect_images(Path(args.images))
    if not images:
        raise FracdetError("no images")
    session = load_model(args.model, args.classes, args.input_size)
    report = bench(session, images, warmup=args.warmup, runs=args.runs)

    stages = ("preprocess", "inference", "postprocess", "total")
    print(f"{'metric':<12}" + "".join(f"{s:>14}" for s in stages))
    for metric in ("mean_ms", "median_ms", "p95_ms"):
        row = [getattr(report.stages[s], metric) for s in stages]
        print(f"{metric:<12}" + "".join(f"{v:>14.3f}" for v in row))
    print(f"samples: {report.runs} runs x {report.num_images} images (warmup {report.warmup})")
    return 0


# --- serve -----------------------------------------------------------------------

def cmd_serve(args) -> int:
    from .service import load_config, run

    config = load_config(args.config)
    run(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracdet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split a dataset into train/val/test")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.2, 0.1))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=_class_file, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("predict", help="run a model over images")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--conf", type=_threshold, default=0.25)
    p.add_argument("--iou", type=_threshold, default=0.45)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=_class_file, default=None)
    p.add_argument("--input-size", type=int, default=None)
    p.add_argument("--json", action="store_true", help="also print payloads to stdout")
    p.add_argument("--draw", action="store_true", help="write annotated PNGs")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", type=_class_file, required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="export P-R and F1 curves as CSV + SVG")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", type=_class_file, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("bench", help="per-stage latency statistics")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--classes", type=_class_file, default=None)
    p.add_argument("--input-size", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="start the prediction HTTP service")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FracdetError, ValueError) as exc:
        print(f"fracdet: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fracdet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
