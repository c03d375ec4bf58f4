"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; ``-v`` alone shows one PASSED/FAILED row per criterion.
"""

import math
import random
import time

import numpy as np
import pytest

import cv2

from fracdet.dataset import ImageEntry, split, write_manifest
from fracdet.decode import (
    AnchorPoint,
    Detection,
    RawPrediction,
    decode_all,
    dist2box,
    letterbox,
    make_anchors,
    nms,
)
from fracdet.evaluation import evaluate, f_beta
from fracdet.geometry import Box, ciou_terms, iou
from fracdet.losses import (
    RegDistribution,
    bce_loss,
    ciou_loss,
    dfl_loss,
    dfl_optimal_targets,
    dfl_target_bins,
)
from fracdet.inference import bench, load_model, predict
from fracdet.reporting import report_to_json

from fixtures_eval import as_plain, golden_fixture
from oracles import (
    central_difference,
    dfl_two_bin_loss,
    evaluate_brute,
    grad_close,
    iou_by_cell_count,
    nms_quadratic,
)
from test_losses import random_box, well_separated_from_kinks


def report(line: str) -> None:
    print(f"ACCEPTANCE PASS: {line}")


class TestLossMathSuite:
    def test_loss_gradients_and_dfl_minimality(self):
        start = time.perf_counter()
        rng = random.Random(101)

        for _ in range(200):
            x = rng.uniform(0.01, 0.99)
            y = rng.uniform(0.0, 1.0)
            w = rng.uniform(0.1, 3.0)
            _, grad = bce_loss(x, y, w)
            numeric = central_difference(lambda v: bce_loss(v[0], y, w)[0], [x], 0)
            assert grad_close(grad, numeric, rel_tol=1e-4, abs_tol=1e-6)

        for _ in range(200):
            reg_max = rng.randint(2, 16)
            target = rng.uniform(0.0, reg_max)
            lo, hi = dfl_target_bins(target, reg_max)
            raw = [rng.uniform(0.05, 1.0) for _ in range(reg_max + 1)]
            total = sum(raw)
            probs = [p / total for p in raw]
            _, grad = dfl_loss(RegDistribution(tuple(probs)), target)
            other = next(i for i in range(reg_max + 1) if i not in (lo, hi))
            for bin_idx in (lo, hi):
                def loss_at(v, bin_idx=bin_idx):
                    p = list(probs)
                    delta = v[0] - p[bin_idx]
                    p[bin_idx] = v[0]
                    p[other] -= delta
                    return dfl_loss(RegDistribution(tuple(p)), target)[0]

                numeric = central_difference(loss_at, [probs[bin_idx]], 0)
                assert grad_close(grad[bin_idx] - grad[other], numeric, 1e-4, 1e-6)

        checked = 0
        while checked < 200:
            pred = random_box(rng)
            gt = random_box(rng)
            if not well_separated_from_kinks(pred, gt):
                continue
            _, grad = ciou_loss(pred, gt)
            coords = [pred.x1, pred.y1, pred.x2, pred.y2]
            for i in range(4):
                numeric = central_difference(
                    lambda v: ciou_loss(Box(v[0], v[1], v[2], v[3]), gt)[0], coords, i
                )
                assert grad_close(grad[i], numeric, 1e-4, 1e-6)
            checked += 1

        for _ in range(20):
            y_lo = rng.randint(0, 14)
            target = y_lo + rng.uniform(0.0, 1.0)
            s_lo, _ = dfl_optimal_targets(target, y_lo, y_lo + 1)
            w_lo = (y_lo + 1) - target
            w_hi = target - y_lo
            best = dfl_two_bin_loss(s_lo, w_lo, w_hi)
            for step in range(1, 1000):
                assert best <= dfl_two_bin_loss(step / 1000.0, w_lo, w_hi) + 1e-12

        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"loss suite took {elapsed:.1f}s"
        report(
            "loss-math: BCE/DFL/CIoU analytic gradients match central differences "
            f"(200 each) and DFL minimality holds on a 1e-3 grid in {elapsed:.1f}s"
        )


class TestGeometrySuite:
    def test_iou_oracle_and_ciou_identities(self):
        start = time.perf_counter()
        rng = random.Random(202)
        for _ in range(1000):
            a = tuple(sorted(rng.sample(range(0, 33), 2)) + sorted(rng.sample(range(0, 33), 2)))
            a = (a[0], a[2], a[1], a[3])
            b = tuple(sorted(rng.sample(range(0, 33), 2)) + sorted(rng.sample(range(0, 33), 2)))
            b = (b[0], b[2], b[1], b[3])
            assert iou(Box(*a), Box(*b)) == iou_by_cell_count(a, b)

        for _ in range(200):
            x1, y1 = rng.uniform(0, 50), rng.uniform(0, 50)
            w, h = rng.uniform(1, 20), rng.uniform(1, 20)
            box = Box(x1, y1, x1 + w, y1 + h)
            loss, _ = ciou_loss(box, box)
            assert loss == 0.0
            scale, shift = rng.uniform(0.3, 3.0), rng.uniform(-5, 5)
            other = Box(
                x1 + shift, y1 + shift, x1 + shift + scale * w, y1 + shift + scale * h
            )
            assert ciou_terms(box, other).aspect_term < 1e-12

        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"geometry suite took {elapsed:.1f}s"
        report(
            "geometry: IoU equals the unit-cell oracle on 1000 integer pairs exactly; "
            f"CIoU identities hold in {elapsed:.1f}s"
        )


class TestDecodeSuite:
    def test_roundtrip_anchor_counts_and_nms_oracle(self):
        rng = random.Random(303)
        for _ in range(500):
            stride = rng.choice([8, 16, 32])
            anchor = AnchorPoint(rng.randint(0, 30) + 0.5, rng.randint(0, 30) + 0.5, stride)
            acx, acy = anchor.cx * stride, anchor.cy * stride
            x1 = acx - rng.uniform(0, 15.9) * stride
            y1 = acy - rng.uniform(0, 15.9) * stride
            x2 = acx + rng.uniform(0, 15.9) * stride
            y2 = acy + rng.uniform(0, 15.9) * stride
            box = dist2box(
                anchor,
                anchor.cx - x1 / stride,
                anchor.cy - y1 / stride,
                x2 / stride - anchor.cx,
                y2 / stride - anchor.cy,
            )
            for got, want in zip((box.x1, box.y1, box.x2, box.y2), (x1, y1, x2, y2)):
                assert abs(got - want) <= 0.5

        assert len(make_anchors(640)) == 8400
        assert len(make_anchors(1024)) == 21504

        for _ in range(200):
            dets = []
            for _ in range(50):
                bx = rng.uniform(0, 80)
                by = rng.uniform(0, 80)
                dets.append(
                    Detection(
                        Box(bx, by, bx + rng.uniform(1, 40), by + rng.uniform(1, 40)),
                        rng.randint(0, 2),
                        rng.random(),
                    )
                )
            thresh = rng.choice([0.3, 0.45, 0.6])
            expected = nms_quadratic(
                [(d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.class_id, d.confidence) for d in dets],
                thresh,
            )
            assert nms(dets, thresh) == [dets[i] for i in expected]

        report(
            "decode: 500 encode->decode round-trips within 0.5 px, anchor counts "
            "8400@640 and 21504@1024, NMS equals the O(n^2) oracle on 200x50 instances"
        )


class TestEvaluationSuite:
    def test_oracle_equality_fixtures_and_f1(self):
        rng = random.Random(404)
        for _ in range(500):
            preds = {}
            gts = {}
            for image_id in ("a", "b"):
                dets = []
                for _ in range(rng.randint(0, 10)):
                    x1, y1 = rng.uniform(0, 40), rng.uniform(0, 40)
                    dets.append(
                        (x1, y1, x1 + rng.uniform(1, 15), y1 + rng.uniform(1, 15),
                         rng.randint(0, 1), round(rng.random(), 3))
                    )
                truth = []
                for _ in range(rng.randint(0, 5)):
                    x1, y1 = rng.uniform(0, 40), rng.uniform(0, 40)
                    truth.append(
                        (x1, y1, x1 + rng.uniform(1, 15), y1 + rng.uniform(1, 15), rng.randint(0, 1))
                    )
                preds[image_id] = [Detection(Box(*d[:4]), d[4], d[5]) for d in dets]
                gts[image_id] = [(Box(*g[:4]), g[4]) for g in truth]
            rep = evaluate(preds, gts, ["c0", "c1"])
            p, g = as_plain(preds, gts)
            expected = evaluate_brute(p, g, 2)
            for cls, r in enumerate(rep.classes):
                assert r.ap50 == expected["ap50"][cls]
                assert r.ap50_95 == expected["ap50_95"][cls]
                assert r.precision == expected["precision"][cls]
                assert r.recall == expected["recall"][cls]
            assert rep.overall.ap50 == expected["map50"]
            assert rep.overall.ap50_95 == expected["map50_95"]

        gts = {"a": [(Box(0, 0, 10, 10), 0)], "b": [(Box(5, 5, 25, 25), 1)]}
        preds = {
            "a": [Detection(Box(0, 0, 10, 10), 0, 1.0)],
            "b": [Detection(Box(5, 5, 25, 25), 1, 1.0)],
        }
        perfect = evaluate(preds, gts, ["c0", "c1"])
        assert perfect.overall.ap50 == 1.0
        assert perfect.overall.ap50_95 == 1.0

        from pathlib import Path

        golden = Path(__file__).parent / "data" / "golden_eval_report.json"
        preds, gts, class_names = golden_fixture()
        assert report_to_json(evaluate(preds, gts, class_names)).encode() == golden.read_bytes()

        assert abs(f_beta(0.600, 0.679, 1.0) - 0.637) <= 0.0005

        report(
            "evaluation: 500 random instances equal the brute-force oracle exactly, "
            "perfect fixture scores 1.0/1.0, golden report byte-identical, "
            "F1(0.600, 0.679) = 0.637 +/- 0.0005"
        )


class TestSplitSuite:
    def test_determinism_partition_and_sizes(self, tmp_path):
        entries = [ImageEntry(f"im{i:05d}.png", 10, 10) for i in range(137)]
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        write_manifest(split(entries, seed=99, class_names=["x", "y"]), a)
        write_manifest(split(entries, seed=99, class_names=["x", "y"]), b)
        assert a.read_bytes() == b.read_bytes()

        rng = random.Random(505)
        for _ in range(100):
            seed = rng.randrange(2**32)
            n = rng.randint(3, 300)
            es = [ImageEntry(f"p{i}.png", 8, 8) for i in range(n)]
            m = split(es, seed=seed)
            train, val, test = set(m.train), set(m.val), set(m.test)
            assert not (train & val) and not (train & test) and not (val & test)
            assert train | val | test == {e.path for e in es}
            assert len(m.train) + len(m.val) + len(m.test) == n

        ten = split([ImageEntry(f"t{i}.png", 8, 8) for i in range(10)], seed=1)
        assert (len(ten.train), len(ten.val), len(ten.test)) == (7, 2, 1)

        report(
            "split: byte-identical manifests for equal seeds, partition holds under "
            "100 random seeds, 10 items split 7/2/1"
        )


class TestEndToEndSuite:
    def test_tiny_model_determinism_and_bench(self, tiny_model_path):
        session = load_model(tiny_model_path, class_names=["c0", "c1"], expected_input=64)
        rng = np.random.RandomState(7)
        img = rng.randint(0, 256, size=(64, 64, 3), dtype=np.uint8)
        ok, buf = cv2.imencode(".png", img)
        assert ok
        payload = buf.tobytes()

        runs = [predict(session, payload, conf=0.25, iou=0.45).detections for _ in range(10)]
        assert all(r == runs[0] for r in runs[1:])

        bench_report = bench(session, [payload], warmup=1, runs=5)
        stages = bench_report.stages
        assert set(stages) == {"preprocess", "inference", "postprocess", "total"}
        parts = (
            stages["preprocess"].mean_ms
            + stages["inference"].mean_ms
            + stages["postprocess"].mean_ms
        )
        assert stages["total"].mean_ms >= 0.95 * parts

        report(
            "end-to-end: tiny 64px 2-class model predicts identically across 10 runs; "
            "bench breakdown satisfies total >= 0.95 * (pre + inf + post)"
        )
