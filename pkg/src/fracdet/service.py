"""HTTP facade for prediction: /health, /api/models, /api/predict.

The service is stateless: request images are never written to disk, and
the optional audit log records metadata only. Each loaded model is backed
by a small pool of execution sessions; a session serves one request at a
time, so concurrent identical requests produce identical responses.

Configuration is an INI file (documented in docs/formats.md) with env-var
overrides BIND_ADDR, MODEL_DIR and MAX_UPLOAD_BYTES.
"""

from __future__ import annotations

import configparser
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import FracdetError, __version__
from .drawing import class_color
from .inference import (
    ImageDecodeError,
    InferenceExecutionError,
    PoolTimeout,
    SessionPool,
    load_model,
    predict,
    result_to_payload,
)

DEFAULT_MAX_UPLOAD = 16 * 1024 * 1024
DEFAULT_POOL_TIMEOUT_S = 30.0


class ConfigError(FracdetError):
    pass


@dataclass
class ModelSpec:
    model_id: str
    path: str
    input_size: int | None = None
    class_names: list[str] | None = None


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8421
    models: list[ModelSpec] = field(default_factory=list)
    conf: float = 0.25
    iou: float = 0.45
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    pool_size: int | None = None  # None -> min(cpu count, 4)
    pool_timeout_s: float = DEFAULT_POOL_TIMEOUT_S
    cors_origins: list[str] = field(default_factory=list)
    audit_log: str | None = None
    static_dir: str | None = None

    def __post_init__(self):
        if not (0.0 < self.conf < 1.0) or not (0.0 < self.iou < 1.0):
            raise ConfigError("default thresholds must lie in (0, 1)")

    def resolved_pool_size(self) -> int:
        if self.pool_size is not None:
            return max(1, self.pool_size)
        return max(1, min(os.cpu_count() or 1, 4))


def _read_class_names(value: str | None, file_value: str | None, base: Path) -> list[str] | None:
    if file_value:
        path = Path(file_value)
        if not path.is_absolute():
            path = base / path
        return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if value:
        return [v.strip() for v in value.split(",") if v.strip()]
    return None


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> ServiceConfig:
    """Parse the INI config; at least one [model:<id>] section is required."""
    env = os.environ if env is None else env
    path = Path(path)
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"config file {path} not found or unreadable")

    svc = parser["service"] if parser.has_section("service") else {}
    bind = env.get("BIND_ADDR") or svc.get("bind", "127.0.0.1:8421")
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigError(f"bind address {bind!r} must be host:port")

    model_dir = env.get("MODEL_DIR") or svc.get("model_dir", "")
    base = path.parent

    models = []
    for section in parser.sections():
        if not section.startswith("model:"):
            continue
        model_id = section.split(":", 1)[1]
        entry = parser[section]
        if "path" not in entry:
            raise ConfigError(f"[{section}] is missing the model path")
        model_path = Path(entry["path"])
        if not model_path.is_absolute():
            model_path = (Path(model_dir) if model_dir else base) / model_path
        input_size = entry.getint("input_size") if "input_size" in entry else None
        names = _read_class_names(entry.get("classes"), entry.get("classes_file"), base)
        models.append(ModelSpec(model_id, str(model_path), input_size, names))
    if not models:
        raise ConfigError(f"{path}: no [model:<id>] sections; at least one model is required")

    max_upload = env.get("MAX_UPLOAD_BYTES") or svc.get("max_upload_bytes")
    origins = [o.strip() for o in svc.get("cors_origins", "").split(",") if o.strip()]
    return ServiceConfig(
        host=host,
        port=int(port_text),
        models=models,
        conf=float(svc.get("conf", 0.25)),
        iou=float(svc.get("iou", 0.45)),
        max_upload_bytes=int(max_upload) if max_upload else DEFAULT_MAX_UPLOAD,
        pool_size=int(svc["pool_size"]) if "pool_size" in svc else None,
        pool_timeout_s=float(svc.get("pool_timeout_s", DEFAULT_POOL_TIMEOUT_S)),
        cors_origins=origins,
        audit_log=svc.get("audit_log") or None,
        static_dir=svc.get("static_dir") or None,
    )


def _error(status: int, message: str, **extra) -> JSONResponse:
    return JSONResponse({"error": message, **extra}, status_code=status)


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the application, loading every configured model eagerly so a
    bad model path fails the process before it accepts traffic."""
    app = FastAPI(title="fracdet", version=__version__)
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    pool_size = config.resolved_pool_size()
    pools: dict[str, SessionPool] = {}
    meta: dict[str, ModelSession] = {}
    for spec in config.models:
        sessions = [
            load_model(spec.path, spec.class_names, spec.input_size)
            for _ in range(pool_size)
        ]
        for s in sessions:
            s.model_id = spec.model_id
        pools[spec.model_id] = SessionPool(sessions)
        meta[spec.model_id] = sessions[0]
    model_order = [spec.model_id for spec in config.models]

    audit_path = Path(config.audit_log) if config.audit_log else None

    def audit(record: dict) -> None:
        if audit_path is None:
            return
        with audit_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/api/models")
    def models():
        out = []
        for model_id in model_order:
            s = meta[model_id]
            out.append(
                {
                    "id": model_id,
                    "input_size": s.input_size,
                    "class_names": list(s.class_names),
                    "class_colors": [class_color(i) for i in range(len(s.class_names))],
                }
            )
        return out

    @app.post("/api/predict")
    async def predict_endpoint(request: Request):
        params = request.query_params
        model_id = params.get("model", model_order[0])
        if model_id not in pools:
            return _error(404, f"unknown model {model_id!r}", known=model_order)
        try:
            conf = float(params.get("conf", config.conf))
            iou = float(params.get("iou", config.iou))
        except ValueError:
            return _error(400, "conf and iou must be numbers")
        if not (0.0 < conf < 1.0) or not (0.0 < iou < 1.0):
            return _error(400, "conf and iou must lie in (0, 1)")

        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > config.max_upload_bytes:
            return _error(413, f"upload exceeds {config.max_upload_bytes} bytes")

        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = None
            for value in form.values():
                if hasattr(value, "read"):
                    upload = value
                    break
            if upload is None:
                return _error(422, "multipart body carries no file field")
            body = await upload.read()
        else:
            body = await request.body()
        if len(body) > config.max_upload_bytes:
            return _error(413, f"upload exceeds {config.max_upload_bytes} bytes")
        if not body:
            return _error(422, "empty request body")

        try:
            with pools[model_id].checkout(config.pool_timeout_s) as session:
                result = predict(session, body, conf=conf, iou=iou)
        except ImageDecodeError as exc:
            return _error(422, str(exc))
        except PoolTimeout as exc:
            return _error(503, str(exc))
        except InferenceExecutionError as exc:
            return _error(500, str(exc), stage=exc.stage)

        audit(
            {
                "ts": time.time(),
                "model": model_id,
                "request_bytes": len(body),
                "detections": len(result.detections),
                "total_ms": result.timing.total_ms,
            }
        )
        return result_to_payload(result, meta[model_id].class_names)

    static_dir = Path(config.static_dir) if config.static_dir else None
    if static_dir and static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def run(config: ServiceConfig) -> None:
    """Start serving; raises before binding if a model fails to load."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
