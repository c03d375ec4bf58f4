#!/usr/bin/env python3
"""Generate tiny structurally-conformant ONNX detection models for CI.

Real trained checkpoints are far too large to vendor, so tests and demos
use throwaway models built here. Two flavors:

  random  - AvgPool + 1x1 Conv heads with seeded random weights; output
            depends on the input image, byte-identical for a given seed.
  fixed   - output is a crafted constant tensor encoding the requested
            boxes (the input is consumed but multiplied by zero), so the
            decoded detections are known in advance.

Both emit the documented layout: input (1, 3, S, S), output
(1, 4*(reg_max+1)+C, sum((S/s)^2 for s in 8,16,32)).

The ONNX protobuf is serialized directly (the onnx package is not a
dependency of this repo); only the few message types needed are written.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

STRIDES = (8, 16, 32)


# --- minimal protobuf writer -------------------------------------------------

def _varint(n: int) -> bytes:
    out = b""
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out += bytes([b | 0x80])
        else:
            return out + bytes([b])


def _tag(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _len_delim(field: int, payload: bytes) -> bytes:
    return _tag(field, 2) + _varint(len(payload)) + payload


def _int_field(field: int, value: int) -> bytes:
    return _tag(field, 0) + _varint(value)


def _string(field: int, s: str) -> bytes:
    return _len_delim(field, s.encode("utf-8"))


def _tensor(name: str, arr: np.ndarray) -> bytes:
    data_type = {np.dtype("float32"): 1, np.dtype("int64"): 7}[arr.dtype]
    msg = b"".join(_int_field(1, d) for d in arr.shape)
    msg += _int_field(2, data_type)
    msg += _string(8, name)
    msg += _len_delim(9, arr.tobytes())
    return msg


def _attr_int(name: str, v: int) -> bytes:
    return _string(1, name) + _int_field(3, v) + _int_field(20, 2)  # type INT


def _attr_ints(name: str, vs) -> bytes:
    return _string(1, name) + b"".join(_int_field(8, v) for v in vs) + _int_field(20, 7)  # INTS


def _node(op: str, inputs, outputs, attrs=()) -> bytes:
    msg = b"".join(_string(1, i) for i in inputs)
    msg += b"".join(_string(2, o) for o in outputs)
    msg += _string(4, op)
    msg += b"".join(_len_delim(5, a) for a in attrs)
    return msg


def _value_info(name: str, dims) -> bytes:
    shape = b"".join(_len_delim(1, _int_field(1, d)) for d in dims)
    ttype = _int_field(1, 1) + _len_delim(2, shape)  # elem_type FLOAT
    return _string(1, name) + _len_delim(2, _len_delim(1, ttype))


def _model(nodes, initializers, inputs, outputs, opset: int = 12) -> bytes:
    graph = b"".join(_len_delim(1, n) for n in nodes)
    graph += _string(2, "tinydet")
    graph += b"".join(_len_delim(5, t) for t in initializers)
    graph += b"".join(_len_delim(11, v) for v in inputs)
    graph += b"".join(_len_delim(12, v) for v in outputs)
    msg = _int_field(1, 8)  # ir_version
    msg += _string(2, "fracdet-make-tiny-model")
    msg += _len_delim(7, graph)
    msg += _len_delim(8, _int_field(2, opset))  # opset_import {version}
    return msg


# --- model builders ----------------------------------------------------------

def head_channels(num_classes: int, reg_max: int) -> int:
    return 4 * (reg_max + 1) + num_classes


def anchor_count(input_size: int) -> int:
    return sum((input_size // s) ** 2 for s in STRIDES)


def build_random_model(input_size: int = 64, num_classes: int = 2, reg_max: int = 16, seed: int = 0) -> bytes:
    if input_size % 32 != 0:
        raise ValueError(f"input size {input_size} must be a multiple of 32")
    no = head_channels(num_classes, reg_max)
    rng = np.random.RandomState(seed)
    nodes, inits, concat_in = [], [], []
    for s in STRIDES:
        grid = input_size // s
        nodes.append(
            _node(
                "AveragePool",
                ["images"],
                [f"pool{s}"],
                [_attr_ints("kernel_shape", [s, s]), _attr_ints("strides", [s, s])],
            )
        )
        weight = (rng.randn(no, 3, 1, 1) * 2.0).astype(np.float32)
        bias = (rng.randn(no) * 1.0).astype(np.float32)
        inits.append(_tensor(f"w{s}", weight))
        inits.append(_tensor(f"b{s}", bias))
        nodes.append(
            _node(
                "Conv",
                [f"pool{s}", f"w{s}", f"b{s}"],
                [f"head{s}"],
                [_attr_ints("kernel_shape", [1, 1])],
            )
        )
        inits.append(_tensor(f"shape{s}", np.array([1, no, grid * grid], dtype=np.int64)))
        nodes.append(_node("Reshape", [f"head{s}", f"shape{s}"], [f"flat{s}"]))
        concat_in.append(f"flat{s}")
    nodes.append(_node("Concat", concat_in, ["output0"], [_attr_int("axis", 2)]))
    return _model(
        nodes,
        inits,
        [_value_info("images", [1, 3, input_size, input_size])],
        [_value_info("output0", [1, no, anchor_count(input_size)])],
    )


def encode_fixed_output(
    input_size: int,
    num_classes: int,
    reg_max: int,
    boxes: list[tuple],
) -> np.ndarray:
    """Raw head tensor decoding to the given (x1, y1, x2, y2, class) boxes.

    Boxes are in input-canvas pixels; each lands on the stride-8 anchor
    cell containing its center, with two-bin distance distributions whose
    expectation reproduces the coordinates exactly. A box may carry an
    optional sixth element, the class logit (default 12.0), which sets the
    decoded confidence via the sigmoid.
    """
    no = head_channels(num_classes, reg_max)
    na = anchor_count(input_size)
    values = np.zeros((no, na), dtype=np.float32)
    values[4 * (reg_max + 1):, :] = -30.0

    grid_w = input_size // 8
    for box in boxes:
        x1, y1, x2, y2, class_id = box[:5]
        class_logit = box[5] if len(box) > 5 else 12.0
        cx = (x1 + x2) / 2.0 / 8.0
        cy = (y1 + y2) / 2.0 / 8.0
        col, row = int(cx), int(cy)
        a_idx = row * grid_w + col
        acx, acy = col + 0.5, row + 0.5
        for side, dist in enumerate((acx - x1 / 8.0, acy - y1 / 8.0, x2 / 8.0 - acx, y2 / 8.0 - acy)):
            if not (0.0 <= dist <= reg_max):
                raise ValueError(f"box side distance {dist} outside [0, {reg_max}] bins")
            lo = min(int(dist), reg_max - 1)
            frac = dist - lo
            base = side * (reg_max + 1)
            values[base : base + reg_max + 1, a_idx] = -60.0
            values[base + lo, a_idx] = math.log(max(1.0 - frac, 1e-12))
            values[base + lo + 1, a_idx] = math.log(max(frac, 1e-12))
        values[4 * (reg_max + 1) + class_id, a_idx] = class_logit
    return values


def build_fixed_model(
    input_size: int,
    num_classes: int,
    reg_max: int,
    boxes: list[tuple],
) -> bytes:
    raw = encode_fixed_output(input_size, num_classes, reg_max, boxes)
    no, na = raw.shape
    # output = K + 0 * mean(images): constant result, input still consumed
    nodes = [
        _node("ReduceMean", ["images"], ["imean"], [_attr_int("keepdims", 0)]),
        _node("Mul", ["imean", "zero"], ["nil"]),
        _node("Add", ["fixed_raw", "nil"], ["output0"]),
    ]
    inits = [
        _tensor("zero", np.zeros((), dtype=np.float32)),
        _tensor("fixed_raw", raw.reshape(1, no, na)),
    ]
    return _model(
        nodes,
        inits,
        [_value_info("images", [1, 3, input_size, input_size])],
        [_value_info("output0", [1, no, na])],
    )


def parse_box(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) not in (5, 6):
        raise argparse.ArgumentTypeError("box must be x1,y1,x2,y2,class_id[,logit]")
    x1, y1, x2, y2 = (float(v) for v in parts[:4])
    box = (x1, y1, x2, y2, int(parts[4]))
    if len(parts) == 6:
        box += (float(parts[5]),)
    return box


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output .onnx path")
    parser.add_argument("--input-size", type=int, default=64)
    parser.add_argument("--classes", type=int, default=2, help="number of classes")
    parser.add_argument("--reg-max", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mode", choices=("random", "fixed"), default="random")
    parser.add_argument(
        "--box",
        type=parse_box,
        action="append",
        default=[],
        help="fixed mode: x1,y1,x2,y2,class_id[,logit] in input pixels (repeatable)",
    )
    args = parser.parse_args(argv)

    if args.mode == "random":
        blob = build_random_model(args.input_size, args.classes, args.reg_max, args.seed)
    else:
        if not args.box:
            parser.error("fixed mode needs at least one --box")
        blob = build_fixed_model(args.input_size, args.classes, args.reg_max, args.box)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(blob)
    print(f"wrote {out} ({len(blob)} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
