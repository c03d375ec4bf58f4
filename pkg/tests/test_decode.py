import math
import random

import numpy as np
import pytest

from fracdet.decode import (
    AnchorPoint,
    Detection,
    LayoutError,
    RawPrediction,
    apply_letterbox,
    decode_all,
    decode_dfl,
    dist2box,
    letterbox,
    make_anchors,
    nms,
    unletterbox,
)
from fracdet.geometry import Box, iou

from oracles import nms_quadratic


class TestLetterbox:
    def test_identity(self):
        t = letterbox(640, 640, 640)
        assert t.scale == 1.0 and t.pad_x == 0 and t.pad_y == 0

    def test_wide_image(self):
        t = letterbox(1280, 640, 640)
        assert t.scale == 0.5
        assert t.pad_x == 0
        assert t.pad_y == 160

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            letterbox(0, 100, 640)
        with pytest.raises(ValueError):
            letterbox(100, 100, 641)

    def test_canvas_fits_target(self):
        rng = random.Random(2)
        for _ in range(200):
            w, h = rng.randint(1, 4000), rng.randint(1, 4000)
            t = letterbox(w, h, 640)
            new_w = round(w * t.scale)
            new_h = round(h * t.scale)
            assert abs(new_w + 2 * t.pad_x - 640) <= 1
            assert abs(new_h + 2 * t.pad_y - 640) <= 1
            assert t.scale > 0 and t.pad_x >= 0 and t.pad_y >= 0

    def test_box_roundtrip(self):
        rng = random.Random(3)
        for _ in range(300):
            w, h = rng.randint(32, 3000), rng.randint(32, 3000)
            t = letterbox(w, h, 640)
            x1, x2 = sorted(rng.uniform(0, w) for _ in range(2))
            y1, y2 = sorted(rng.uniform(0, h) for _ in range(2))
            b = Box(x1, y1, x2, y2)
            back = unletterbox(apply_letterbox(b, t), t)
            for a, c in zip((b.x1, b.y1, b.x2, b.y2), (back.x1, back.y1, back.x2, back.y2)):
                assert abs(a - c) <= 0.5

    def test_pad_corner_maps_to_origin(self):
        t = letterbox(1280, 640, 640)
        back = unletterbox(Box(t.pad_x, t.pad_y, t.pad_x, t.pad_y), t)
        assert (back.x1, back.y1) == (0.0, 0.0)

    def test_box_in_padding_collapses(self):
        t = letterbox(1280, 640, 640)  # pad_y = 160
        back = unletterbox(Box(100, 10, 200, 100), t)
        assert back.area == 0.0


class TestMakeAnchors:
    def test_count_640(self):
        assert len(make_anchors(640)) == 80**2 + 40**2 + 20**2 == 8400

    def test_count_1024(self):
        assert len(make_anchors(1024)) == 128**2 + 64**2 + 32**2 == 21504

    def test_count_32(self):
        assert len(make_anchors(32)) == 4**2 + 2**2 + 1**2 == 21

    def test_rejects_indivisible(self):
        with pytest.raises(ValueError):
            make_anchors(100)

    def test_centers_and_strides(self):
        anchors = make_anchors(64)
        assert {a.stride for a in anchors} == {8, 16, 32}
        for a in anchors:
            assert a.cx % 1 == 0.5 and a.cy % 1 == 0.5
        # stride-8 grid comes first, row-major
        assert anchors[0] == AnchorPoint(0.5, 0.5, 8)
        assert anchors[1] == AnchorPoint(1.5, 0.5, 8)
        assert anchors[8] == AnchorPoint(0.5, 1.5, 8)


class TestDecodeDfl:
    def test_strong_one_hot(self):
        logits = [-10.0] * 17
        logits[7] = 30.0
        assert decode_dfl(logits) == pytest.approx(7.0, abs=1e-9)

    def test_uniform(self):
        assert decode_dfl([0.0] * 17) == pytest.approx(8.0, rel=1e-12)

    def test_two_bin_expectation(self):
        logits = [-60.0] * 17
        logits[2] = math.log(0.7)
        logits[3] = math.log(0.3)
        assert decode_dfl(logits) == pytest.approx(2.3, abs=1e-9)

    def test_output_range(self):
        rng = np.random.RandomState(5)
        for _ in range(200):
            out = decode_dfl(rng.randn(17) * 10)
            assert 0.0 <= out <= 16.0


class TestDist2Box:
    def test_zero_distances(self):
        b = dist2box(AnchorPoint(10.5, 10.5, 8), 0, 0, 0, 0)
        assert b == Box(84, 84, 84, 84)

    def test_unit_distances(self):
        b = dist2box(AnchorPoint(10.5, 10.5, 8), 1, 1, 1, 1)
        assert b == Box(76, 76, 92, 92)

    def test_encode_decode_identity(self):
        rng = random.Random(7)
        for _ in range(200):
            stride = rng.choice([8, 16, 32])
            a = AnchorPoint(rng.randint(0, 19) + 0.5, rng.randint(0, 19) + 0.5, stride)
            # target box containing the anchor center
            acx, acy = a.cx * stride, a.cy * stride
            x1 = acx - rng.uniform(0, 15) * stride
            y1 = acy - rng.uniform(0, 15) * stride
            x2 = acx + rng.uniform(0, 15) * stride
            y2 = acy + rng.uniform(0, 15) * stride
            ltrb = (
                a.cx - x1 / stride,
                a.cy - y1 / stride,
                x2 / stride - a.cx,
                y2 / stride - a.cy,
            )
            b = dist2box(a, *ltrb)
            assert b.x1 == pytest.approx(x1, abs=1e-9)
            assert b.y1 == pytest.approx(y1, abs=1e-9)
            assert b.x2 == pytest.approx(x2, abs=1e-9)
            assert b.y2 == pytest.approx(y2, abs=1e-9)


def det(x1, y1, x2, y2, cls, conf):
    return Detection(Box(x1, y1, x2, y2), cls, conf)


class TestNms:
    def test_duplicate_same_class(self):
        kept = nms([det(0, 0, 10, 10, 0, 0.9), det(0, 0, 10, 10, 0, 0.8)], 0.45)
        assert len(kept) == 1
        assert kept[0].confidence == 0.9

    def test_duplicate_different_class(self):
        kept = nms([det(0, 0, 10, 10, 0, 0.9), det(0, 0, 10, 10, 1, 0.8)], 0.45)
        assert len(kept) == 2

    def test_empty(self):
        assert nms([], 0.5) == []

    def test_matches_quadratic_oracle(self):
        rng = random.Random(11)
        for _ in range(200):
            dets = []
            for _ in range(50):
                x1 = rng.uniform(0, 80)
                y1 = rng.uniform(0, 80)
                dets.append(
                    det(
                        x1,
                        y1,
                        x1 + rng.uniform(1, 40),
                        y1 + rng.uniform(1, 40),
                        rng.randint(0, 2),
                        rng.random(),
                    )
                )
            thresh = rng.choice([0.3, 0.45, 0.6])
            expected = nms_quadratic(
                [(d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.class_id, d.confidence) for d in dets],
                thresh,
            )
            got = nms(dets, thresh)
            assert got == [dets[i] for i in expected]

    def test_output_properties(self):
        rng = random.Random(13)
        dets = []
        for _ in range(60):
            x1 = rng.uniform(0, 50)
            y1 = rng.uniform(0, 50)
            dets.append(det(x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30), rng.randint(0, 1), rng.random()))
        kept = nms(dets, 0.45)
        assert all(k in dets for k in kept)
        confs = [k.confidence for k in kept]
        assert confs == sorted(confs, reverse=True)
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                if a.class_id == b.class_id:
                    assert iou(a.box, b.box) < 0.45


def encode_raw(boxes, transform, anchors, reg_max=16, num_classes=3):
    """Independent encoder: craft a raw output that decodes to the given
    (box, class_id) pairs, each placed on the anchor cell containing its
    letterboxed center at stride 8."""
    no = 4 * (reg_max + 1) + num_classes
    values = np.zeros((no, len(anchors)), dtype=np.float64)
    values[4 * (reg_max + 1) :, :] = -30.0

    grid_w = transform.target // 8
    for box, class_id in boxes:
        lb = apply_letterbox(box, transform)
        cx = (lb.x1 + lb.x2) / 2 / 8
        cy = (lb.y1 + lb.y2) / 2 / 8
        i, j = int(cx), int(cy)
        a_idx = j * grid_w + i
        acx, acy = i + 0.5, j + 0.5
        ltrb = (acx - lb.x1 / 8, acy - lb.y1 / 8, lb.x2 / 8 - acx, lb.y2 / 8 - acy)
        for side, d in enumerate(ltrb):
            assert 0 <= d <= reg_max
            lo = min(int(d), reg_max - 1)
            w_hi = d - lo
            base = side * (reg_max + 1)
            values[base : base + reg_max + 1, a_idx] = -60.0
            values[base + lo, a_idx] = math.log(max(1 - w_hi, 1e-12))
            values[base + lo + 1, a_idx] = math.log(max(w_hi, 1e-12))
        values[4 * (reg_max + 1) + class_id, a_idx] = 12.0
    return RawPrediction(values, reg_max, num_classes)


class TestDecodeAll:
    def setup_method(self):
        self.transform = letterbox(640, 640, 640)
        self.anchors = make_anchors(640)

    def test_all_below_threshold(self):
        no = 4 * 17 + 3
        raw = RawPrediction(np.full((no, 8400), -30.0), 16, 3)
        assert decode_all(raw, self.anchors, self.transform) == []

    def test_single_crafted_box(self):
        target = Box(100.0, 120.0, 180.0, 200.0)
        raw = encode_raw([(target, 1)], self.transform, self.anchors)
        dets = decode_all(raw, self.anchors, self.transform)
        assert len(dets) == 1
        d = dets[0]
        assert d.class_id == 1
        assert d.confidence > 0.99
        for got, want in zip(
            (d.box.x1, d.box.y1, d.box.x2, d.box.y2),
            (target.x1, target.y1, target.x2, target.y2),
        ):
            assert abs(got - want) <= 0.5

    def test_duplicate_anchors_suppressed(self):
        # same box encoded on two nearby anchors decodes to one detection
        target = Box(200.0, 200.0, 260.0, 260.0)
        raw = encode_raw([(target, 0)], self.transform, self.anchors)
        raw2 = encode_raw([(Box(201.0, 200.0, 261.0, 260.0), 0)], self.transform, self.anchors)
        merged = np.where(raw2.values > raw.values, raw2.values, raw.values)
        # place the second copy on a different anchor column
        shifted = np.roll(raw2.values, 1, axis=1)
        merged = np.where(shifted > merged, shifted, merged)
        dets = decode_all(RawPrediction(merged, 16, 3), self.anchors, self.transform)
        assert len(dets) == 1

    def test_box_fully_in_padding_discarded(self):
        transform = letterbox(1280, 640, 640)  # pad_y = 160
        anchors = make_anchors(640)
        no = 4 * 17 + 3
        values = np.zeros((no, 8400), dtype=np.float64)
        values[4 * 17 :, :] = -30.0
        # anchor (18.5, 6.5) stride 8: distances putting the box at
        # letterboxed (100, 10)-(200, 100), entirely inside the top padding
        a_idx = 6 * 80 + 18
        for side, d in enumerate((6.0, 5.25, 6.5, 6.0)):
            base = side * 17
            values[base : base + 17, a_idx] = -60.0
            lo = int(d)
            w_hi = d - lo
            values[base + lo, a_idx] = math.log(max(1 - w_hi, 1e-12))
            values[base + lo + 1, a_idx] = math.log(max(w_hi, 1e-12))
        values[4 * 17, a_idx] = 12.0
        assert decode_all(RawPrediction(values, 16, 3), anchors, transform) == []

    def test_layout_mismatch_reports_counts(self):
        raw = RawPrediction(np.zeros((4 * 17 + 3, 100)), 16, 3)
        with pytest.raises(LayoutError) as exc:
            decode_all(raw, self.anchors, self.transform)
        assert "100" in str(exc.value) and "8400" in str(exc.value)

    def test_bad_channel_count(self):
        with pytest.raises(LayoutError):
            RawPrediction(np.zeros((50, 8400)), 16, 3)

    def test_flat_input_reshaped(self):
        no = 4 * 17 + 3
        raw = RawPrediction(np.full(no * 8400, -30.0), 16, 3)
        assert raw.values.shape == (no, 8400)

    def test_deterministic(self):
        rng = np.random.RandomState(17)
        values = rng.randn(4 * 17 + 3, 8400) * 3
        a = decode_all(RawPrediction(values.copy(), 16, 3), self.anchors, self.transform)
        b = decode_all(RawPrediction(values.copy(), 16, 3), self.anchors, self.transform)
        assert a == b
        assert len(a) <= 300
