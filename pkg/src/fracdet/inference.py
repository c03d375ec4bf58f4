"""ONNX model execution: load, validate, predict with per-stage timing.

Models are exported detector heads emitting the documented raw layout
(see decode module). Execution runs on the OpenCV DNN backend, pinned to
a single thread by default so repeated runs are reproducible; pass
single_thread=False to opt into intra-op parallelism.

A ModelSession must not be shared by concurrent predictions; create one
session per worker (the service module pools them).
"""

from __future__ import annotations

import queue
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from . import FracdetError
from .decode import (
    DEFAULT_CONF_THRESH,
    DEFAULT_IOU_THRESH,
    DEFAULT_REG_MAX,
    DEFAULT_STRIDES,
    Detection,
    LetterboxTransform,
    RawPrediction,
    anchor_array,
    decode_all,
    letterbox,
    make_anchors,
)
from .onnx_meta import read_model_info

PAD_GRAY = 114  # letterbox fill, the exported models' training convention


class ModelError(FracdetError):
    pass


class ModelNotFoundError(ModelError):
    pass


class MalformedModelError(ModelError):
    pass


class ModelShapeError(ModelError):
    pass


class ImageDecodeError(FracdetError):
    pass


class InferenceExecutionError(FracdetError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class TimingBreakdown:
    preprocess_ms: float
    inference_ms: float
    postprocess_ms: float
    total_ms: float


@dataclass(frozen=True)
class PredictResult:
    detections: tuple[Detection, ...]
    timing: TimingBreakdown
    model_id: str
    conf_thresh: float
    iou_thresh: float
    image_width: int
    image_height: int


@dataclass
class ModelSession:
    model_id: str
    path: str
    input_size: int
    class_names: list[str]
    reg_max: int
    net: cv2.dnn.Net
    anchors: np.ndarray


class PoolTimeout(FracdetError):
    pass


class SessionPool:
    """Fixed set of interchangeable sessions; checkout is exclusive, so a
    session is never used by two in-flight predictions."""

    def __init__(self, sessions: Sequence[ModelSession]):
        if not sessions:
            raise ValueError("pool needs at least one session")
        self._queue: queue.Queue[ModelSession] = queue.Queue()
        for s in sessions:
            self._queue.put(s)

    @contextmanager
    def checkout(self, timeout: float):
        try:
            session = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise PoolTimeout(f"no free model session within {timeout:.0f}s") from None
        try:
            yield session
        finally:
            self._queue.put(session)


def result_to_payload(result: PredictResult, class_names: Sequence[str]) -> dict:
    """JSON-ready dict for a prediction (the documented response schema)."""
    return {
        "model": result.model_id,
        "width": result.image_width,
        "height": result.image_height,
        "conf": result.conf_thresh,
        "iou": result.iou_thresh,
        "detections": [
            {
                "class_id": d.class_id,
                "class_name": class_names[d.class_id]
                if d.class_id < len(class_names)
                else str(d.class_id),
                "confidence": d.confidence,
                "box": {"x1": d.box.x1, "y1": d.box.y1, "x2": d.box.x2, "y2": d.box.y2},
            }
            for d in result.detections
        ],
        "timing_ms": {
            "preprocess": result.timing.preprocess_ms,
            "inference": result.timing.inference_ms,
            "postprocess": result.timing.postprocess_ms,
            "total": result.timing.total_ms,
        },
    }


@dataclass(frozen=True)
class StageStats:
    mean_ms: float
    median_ms: float
    p95_ms: float


@dataclass(frozen=True)
class BenchReport:
    stages: dict[str, StageStats]
    samples: dict[str, list[float]]
    num_images: int
    runs: int
    warmup: int


def _expected_anchor_count(input_size: int) -> int:
    return sum((input_size // s) ** 2 for s in DEFAULT_STRIDES)


def load_model(
    path: str | Path,
    class_names: Sequence[str] | None = None,
    expected_input: int | None = None,
    reg_max: int | None = None,
    single_thread: bool = True,
) -> ModelSession:
    """Open an exported ONNX detector and validate its declared shapes.

    The input must be a static (1, 3, S, S) tensor with S a multiple of
    32; the output channel count must decompose as 4*(reg_max+1) + C.
    When class_names is omitted, C is derived from the channel count
    (reg_max defaults to 16) and placeholder names are generated.
    Distinct errors: ModelNotFoundError, MalformedModelError,
    ModelShapeError.

    single_thread pins the OpenCV thread pool to one thread
    (process-global) for deterministic timing and output.
    """
    p = Path(path)
    if not p.is_file():
        raise ModelNotFoundError(f"model file {p} does not exist")
    try:
        info = read_model_info(p)
    except ValueError as exc:
        raise MalformedModelError(f"{p}: {exc}") from None

    in_dims = info.inputs[0].dims
    if len(in_dims) != 4 or in_dims[2] is None or in_dims[3] is None:
        raise MalformedModelError(
            f"{p}: expected a static (1, 3, H, W) input, declared {in_dims}"
        )
    if in_dims[2] != in_dims[3]:
        raise ModelShapeError(f"{p}: input must be square, declared {in_dims}")
    input_size = int(in_dims[2])
    if expected_input is not None and input_size != expected_input:
        raise ModelShapeError(
            f"{p}: model declares input {input_size}, expected {expected_input}"
        )
    if input_size % 32 != 0:
        raise ModelShapeError(f"{p}: input size {input_size} not a multiple of 32")

    out_dims = info.outputs[0].dims
    if len(out_dims) != 3 or out_dims[1] is None:
        raise MalformedModelError(
            f"{p}: expected a (1, channels, anchors) output, declared {out_dims}"
        )
    channels = int(out_dims[1])
    if class_names is not None:
        names = list(class_names)
        reg_channels = channels - len(names)
        if reg_channels <= 0 or reg_channels % 4 != 0 or reg_channels // 4 - 1 < 1:
            raise ModelShapeError(
                f"{p}: {channels} output channels do not decompose as "
                f"4*(reg_max+1) + {len(names)} classes"
            )
        derived_reg_max = reg_channels // 4 - 1
        if reg_max is not None and reg_max != derived_reg_max:
            raise ModelShapeError(
                f"{p}: channel count implies reg_max {derived_reg_max}, caller said {reg_max}"
            )
        reg_max = derived_reg_max
    else:
        reg_max = DEFAULT_REG_MAX if reg_max is None else reg_max
        num_classes = channels - 4 * (reg_max + 1)
        if num_classes < 1:
            raise ModelShapeError(
                f"{p}: {channels} output channels leave no class channels "
                f"with reg_max {reg_max}"
            )
        names = [f"class{i}" for i in range(num_classes)]

    expected_anchors = _expected_anchor_count(input_size)
    if out_dims[2] is not None and int(out_dims[2]) != expected_anchors:
        raise ModelShapeError(
            f"{p}: model declares {out_dims[2]} anchor columns, expected "
            f"{expected_anchors} for input {input_size}"
        )

    if single_thread:
        cv2.setNumThreads(1)
    try:
        net = cv2.dnn.readNetFromONNX(str(p))
    except cv2.error as exc:
        raise MalformedModelError(f"{p}: backend failed to load model: {exc}") from None

    return ModelSession(
        model_id=p.stem,
        path=str(p),
        input_size=input_size,
        class_names=names,
        reg_max=reg_max,
        net=net,
        anchors=anchor_array(make_anchors(input_size)),
    )


def decode_image(source: str | Path | bytes | np.ndarray) -> np.ndarray:
    """Decode PNG/JPEG bytes or file into 8-bit 3-channel BGR (grayscale is
    replicated). Arrays pass through with the same normalization."""
    if isinstance(source, np.ndarray):
        img = source
        if img.ndim == 2:
            img = cv2.cvtColor(img, cv2.COLOR_GRAY2BGR)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ImageDecodeError(f"unsupported array shape {source.shape}")
        return img
    if isinstance(source, (str, Path)):
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise ImageDecodeError(f"cannot read image {source}: {exc}") from None
    else:
        data = source
    if not data:
        raise ImageDecodeError("empty image payload")
    img = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if img is None:
        raise ImageDecodeError("payload does not decode as PNG/JPEG")
    return img


def _preprocess(img: np.ndarray, input_size: int) -> tuple[np.ndarray, LetterboxTransform]:
    h, w = img.shape[:2]
    t = letterbox(w, h, input_size)
    new_w = round(w * t.scale)
    new_h = round(h * t.scale)
    resized = cv2.resize(img, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    canvas = np.full((input_size, input_size, 3), PAD_GRAY, dtype=np.uint8)
    canvas[t.pad_y : t.pad_y + new_h, t.pad_x : t.pad_x + new_w] = resized
    blob = canvas[:, :, ::-1].transpose(2, 0, 1)[None].astype(np.float32) / 255.0
    return blob, t


def predict(
    session: ModelSession,
    image: str | Path | bytes | np.ndarray,
    conf: float = DEFAULT_CONF_THRESH,
    iou: float = DEFAULT_IOU_THRESH,
) -> PredictResult:
    """Letterbox, run the network, decode; wall-clock each stage.

    Image decoding (when the input is a path or bytes) counts toward the
    preprocess stage.
    """
    t0 = time.perf_counter()
    try:
        img = decode_image(image)
        blob, transform = _preprocess(img, session.input_size)
    except ImageDecodeError:
        raise
    except cv2.error as exc:
        raise InferenceExecutionError("preprocess", str(exc)) from None
    t1 = time.perf_counter()

    try:
        session.net.setInput(blob)
        out = session.net.forward()
    except cv2.error as exc:
        raise InferenceExecutionError("inference", str(exc)) from None
    t2 = time.perf_counter()

    raw = RawPrediction(out[0], session.reg_max, len(session.class_names))
    dets = decode_all(raw, session.anchors, transform, conf, iou)
    t3 = time.perf_counter()

    return PredictResult(
        detections=tuple(dets),
        timing=TimingBreakdown(
            preprocess_ms=(t1 - t0) * 1e3,
            inference_ms=(t2 - t1) * 1e3,
            postprocess_ms=(t3 - t2) * 1e3,
            total_ms=(t3 - t0) * 1e3,
        ),
        model_id=session.model_id,
        conf_thresh=conf,
        iou_thresh=iou,
        image_width=img.shape[1],
        image_height=img.shape[0],
    )


def bench(
    session: ModelSession,
    images: Sequence[str | Path | bytes | np.ndarray],
    warmup: int = 3,
    runs: int = 10,
    conf: float = DEFAULT_CONF_THRESH,
    iou: float = DEFAULT_IOU_THRESH,
) -> BenchReport:
    """Aggregate per-stage timing over runs x images; warmup passes are
    executed but not recorded. Images are decoded once, up front, so the
    preprocess stage measures letterboxing and blob packing only."""
    if not images:
        raise ValueError("no images to benchmark")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    decoded = [decode_image(i) for i in images]

    samples: dict[str, list[float]] = {
        "preprocess": [],
        "inference": [],
        "postprocess": [],
        "total": [],
    }
    for pass_idx in range(warmup + runs):
        for img in decoded:
            result = predict(session, img, conf, iou)
            if pass_idx < warmup:
                continue
            samples["preprocess"].append(result.timing.preprocess_ms)
            samples["inference"].append(result.timing.inference_ms)
            samples["postprocess"].append(result.timing.postprocess_ms)
            samples["total"].append(result.timing.total_ms)

    def stats(values: list[float]) -> StageStats:
        ordered = sorted(values)
        p95_idx = max(0, min(len(ordered) - 1, round(0.95 * (len(ordered) - 1))))
        return StageStats(
            mean_ms=sum(values) / len(values),
            median_ms=statistics.median(values),
            p95_ms=ordered[p95_idx],
        )

    return BenchReport(
        stages={name: stats(vals) for name, vals in samples.items()},
        samples=samples,
        num_images=len(decoded),
        runs=runs,
        warmup=warmup,
    )
