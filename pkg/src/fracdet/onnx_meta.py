"""Lightweight reader for ONNX model metadata.

Pulls the graph's input and output tensor shapes straight out of the
protobuf wire format, so exported models can be validated (input size,
channel count, anchor count) before handing the file to the execution
backend. Only the handful of fields needed for that is decoded; everything
else is skipped by wire type.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class TensorInfo:
    name: str
    dims: tuple[int | None, ...]  # None marks a dynamic/symbolic dimension


@dataclass(frozen=True)
class OnnxModelInfo:
    inputs: tuple[TensorInfo, ...]
    outputs: tuple[TensorInfo, ...]


class _Reader:
    def __init__(self, data: bytes, start: int = 0, end: int | None = None):
        self.data = data
        self.pos = start
        self.end = len(data) if end is None else end

    def eof(self) -> bool:
        return self.pos >= self.end

    def varint(self) -> int:
        result = 0
        shift = 0
        while True:
            if self.pos >= self.end:
                raise ValueError("truncated varint")
            b = self.data[self.pos]
            self.pos += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7
            if shift > 70:
                raise ValueError("varint too long")

    def field(self) -> tuple[int, int]:
        tag = self.varint()
        return tag >> 3, tag & 0x7

    def bytes_field(self) -> bytes:
        n = self.varint()
        if self.pos + n > self.end:
            raise ValueError("truncated length-delimited field")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def skip(self, wire_type: int) -> None:
        if wire_type == 0:
            self.varint()
        elif wire_type == 1:
            self.pos += 8
        elif wire_type == 2:
            self.bytes_field()
        elif wire_type == 5:
            self.pos += 4
        else:
            raise ValueError(f"unsupported wire type {wire_type}")
        if self.pos > self.end:
            raise ValueError("truncated field")


def _parse_dimension(data: bytes) -> int | None:
    r = _Reader(data)
    value: int | None = None
    while not r.eof():
        num, wt = r.field()
        if num == 1 and wt == 0:  # dim_value
            value = r.varint()
        elif num == 2 and wt == 2:  # dim_param (symbolic)
            r.bytes_field()
            value = None
        else:
            r.skip(wt)
    return value


def _parse_shape(data: bytes) -> tuple[int | None, ...]:
    r = _Reader(data)
    dims = []
    while not r.eof():
        num, wt = r.field()
        if num == 1 and wt == 2:  # dim
            dims.append(_parse_dimension(r.bytes_field()))
        else:
            r.skip(wt)
    return tuple(dims)


def _parse_tensor_type(data: bytes) -> tuple[int | None, ...]:
    r = _Reader(data)
    shape: tuple[int | None, ...] = ()
    while not r.eof():
        num, wt = r.field()
        if num == 2 and wt == 2:  # shape
            shape = _parse_shape(r.bytes_field())
        else:
            r.skip(wt)
    return shape


def _parse_type(data: bytes) -> tuple[int | None, ...]:
    r = _Reader(data)
    shape: tuple[int | None, ...] = ()
    while not r.eof():
        num, wt = r.field()
        if num == 1 and wt == 2:  # tensor_type
            shape = _parse_tensor_type(r.bytes_field())
        else:
            r.skip(wt)
    return shape


def _parse_value_info(data: bytes) -> TensorInfo:
    r = _Reader(data)
    name = ""
    dims: tuple[int | None, ...] = ()
    while not r.eof():
        num, wt = r.field()
        if num == 1 and wt == 2:  # name
            name = r.bytes_field().decode("utf-8", errors="replace")
        elif num == 2 and wt == 2:  # type
            dims = _parse_type(r.bytes_field())
        else:
            r.skip(wt)
    return TensorInfo(name, dims)


def _initializer_name(data: bytes) -> str:
    r = _Reader(data)
    name = ""
    while not r.eof():
        num, wt = r.field()
        if num == 8 and wt == 2:  # TensorProto.name
            name = r.bytes_field().decode("utf-8", errors="replace")
        else:
            r.skip(wt)
    return name


def _parse_graph(data: bytes) -> OnnxModelInfo:
    r = _Reader(data)
    inputs: list[TensorInfo] = []
    outputs: list[TensorInfo] = []
    initializer_names: set[str] = set()
    while not r.eof():
        num, wt = r.field()
        if num == 11 and wt == 2:  # input
            inputs.append(_parse_value_info(r.bytes_field()))
        elif num == 12 and wt == 2:  # output
            outputs.append(_parse_value_info(r.bytes_field()))
        elif num == 5 and wt == 2:  # initializer
            initializer_names.add(_initializer_name(r.bytes_field()))
        else:
            r.skip(wt)
    # older exporters repeat initializers in graph.input; drop them
    real_inputs = tuple(t for t in inputs if t.name not in initializer_names)
    return OnnxModelInfo(real_inputs, tuple(outputs))


def read_model_info(source: str | Path | bytes) -> OnnxModelInfo:
    """Extract input/output tensor names and shapes from an ONNX file.

    Raises ValueError for files that do not parse as an ONNX graph.
    """
    data = source if isinstance(source, bytes) else Path(source).read_bytes()
    r = _Reader(data)
    info: OnnxModelInfo | None = None
    while not r.eof():
        num, wt = r.field()
        if num == 7 and wt == 2:  # ModelProto.graph
            info = _parse_graph(r.bytes_field())
        else:
            r.skip(wt)
    if info is None or not info.inputs or not info.outputs:
        raise ValueError("no graph with inputs and outputs found; not an ONNX model?")
    return info
