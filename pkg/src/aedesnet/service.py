"""Inference runtime and HTTP classification service.

The loaded model, preprocessing statistics, and metadata travel together
as a ModelBundle; classify_bytes is the one inference entry point, shared
by the CLI and the HTTP handlers so both produce identical scores.  The
service holds the bundle as immutable shared state: inference-mode
forward passes write no caches, so concurrent requests are safe.

Multipart uploads are parsed with the stdlib email parser rather than a
form-parsing dependency; the service accepts either a raw image body or
a multipart form with one file field.
"""

from __future__ import annotations

import asyncio
import io
import os
import time
from dataclasses import dataclass
from email import policy
from email.parser import BytesParser

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, InputError
from .model import Model, model_summary
from .modelfmt import ModelMeta, load_model
from .preprocess import PreprocessStats, apply_preprocess, rescale, resize_bilinear

DEFAULT_MAX_UPLOAD_BYTES = 10 * 1024 * 1024
DEFAULT_TIMEOUT_SECONDS = 30.0
MODEL_PATH_ENV = "AEDESNET_MODEL"

_RAW_CONTENT_TYPES = ("image/png", "image/jpeg", "image/webp", "image/bmp",
                      "application/octet-stream")


@dataclass(frozen=True)
class ClassificationResult:
    score: float
    label: str
    threshold: float
    model_version: str
    latency_ms: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "label": self.label,
            "threshold": self.threshold,
            "model_version": self.model_version,
            "latency_ms": self.latency_ms,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class ModelBundle:
    """Model, fitted preprocessing statistics, and artifact metadata."""

    model: Model
    stats: PreprocessStats
    meta: ModelMeta

    @classmethod
    def from_file(cls, path) -> "ModelBundle":
        model, stats, meta = load_model(path)
        return cls(model=model, stats=stats, meta=meta)


def decode_image_bytes(data: bytes) -> tuple[np.ndarray, list[str]]:
    """Decode PNG/JPEG bytes to an (H, W, 3) uint8 array.

    Non-RGB inputs are converted rather than rejected; each conversion is
    reported as a warning string so the caller can surface it.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise InputError(f"image bytes undecodable: {exc}") from exc
    notes = []
    if img.mode != "RGB":
        bands = img.getbands()
        if "A" in bands or "transparency" in img.info:
            notes.append("alpha channel dropped")
        if img.mode in ("1", "L", "LA", "I", "F") or img.mode.startswith("I;"):
            notes.append("grayscale image replicated to 3 channels")
        elif "A" not in bands:
            notes.append(f"converted from {img.mode} to RGB")
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8), notes


def classify_bytes(bundle: ModelBundle, data: bytes,
                   threshold: float | None = None) -> ClassificationResult:
    """Decode, preprocess exactly as training did, and score one image."""
    start = time.perf_counter()
    rgb, notes = decode_image_bytes(data)
    h, w, _ = bundle.model.spec.input_shape
    resized = resize_bilinear(rgb, (h, w))
    scaled = rescale(resized, dtype=bundle.model.dtype)
    x = apply_preprocess(scaled[None], bundle.stats).astype(bundle.model.dtype)
    score = float(bundle.model.forward(x, training=False).reshape(-1)[0])
    thr = bundle.meta.threshold if threshold is None else float(threshold)
    names = bundle.meta.class_names
    label = names[1] if score >= thr else names[0]
    latency_ms = (time.perf_counter() - start) * 1000.0
    return ClassificationResult(
        score=score,
        label=label,
        threshold=thr,
        model_version=bundle.meta.model_version,
        latency_ms=latency_ms,
        warnings=tuple(notes),
    )


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def _content_type_of(part) -> str:
    return part.get_content_type().lower()


def extract_image_from_multipart(content_type: str, body: bytes) -> bytes:
    """Pull the first file field out of a multipart/form-data body.

    Parsing rides on the stdlib email machinery: the request body is
    framed as a MIME document by prepending its Content-Type header.
    """
    prologue = (f"Content-Type: {content_type}\r\n"
                f"MIME-Version: 1.0\r\n\r\n").encode("latin-1")
    msg = BytesParser(policy=policy.HTTP).parsebytes(prologue + body)
    if not msg.is_multipart():
        raise InputError("multipart body could not be parsed into parts")
    for part in msg.iter_parts():
        filename = part.get_filename()
        ctype = _content_type_of(part)
        if filename is None and not ctype.startswith("image/"):
            continue
        if not (ctype.startswith("image/") or ctype == "application/octet-stream"):
            raise InputError(f"unsupported file part content type {ctype!r}")
        payload = part.get_payload(decode=True)
        if payload:
            return payload
    raise InputError("multipart body contains no file field")


def model_info(bundle: ModelBundle, threshold: float) -> dict:
    layers = []
    for layer, shape in zip(bundle.model.layers, bundle.model.out_shapes):
        layers.append({
            "kind": layer.spec.kind,
            "output_shape": list(shape),
            "params": layer.param_count(),
        })
    return {
        "input_shape": list(bundle.model.spec.input_shape),
        "class_names": list(bundle.meta.class_names),
        "threshold": threshold,
        "model_version": bundle.meta.model_version,
        "layers": layers,
        "summary": model_summary(bundle.model.spec),
    }


def create_app(bundle: ModelBundle | None = None,
               model_path=None,
               threshold: float | None = None,
               cors_origins: tuple[str, ...] = ("*",),
               max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES,
               timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS,
               static_dir=None) -> FastAPI:
    """Build the ASGI app around one immutable model bundle.

    With neither a bundle nor a path, the model path falls back to the
    AEDESNET_MODEL environment variable (the bare-ASGI deployment case;
    the CLI always passes explicit values).
    """
    if bundle is None:
        if model_path is None:
            model_path = os.environ.get(MODEL_PATH_ENV)
        if model_path is None:
            raise ConfigError(
                f"no model given: pass a bundle or model_path, or set {MODEL_PATH_ENV}"
            )
        bundle = ModelBundle.from_file(model_path)
    effective_threshold = bundle.meta.threshold if threshold is None else float(threshold)

    app = FastAPI(title="aedesnet inference service", docs_url=None, redoc_url=None)
    if cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "model_version": bundle.meta.model_version}

    @app.get("/model/info")
    async def info():
        return model_info(bundle, effective_threshold)

    @app.post("/classify")
    async def classify(request: Request):
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > max_upload_bytes:
            return _error(413, "payload_too_large",
                          f"upload exceeds the {max_upload_bytes} byte limit")
        content_type = request.headers.get("content-type", "").lower()
        main_type = content_type.split(";")[0].strip()
        is_multipart = main_type == "multipart/form-data"
        if content_type and not is_multipart and main_type not in _RAW_CONTENT_TYPES:
            return _error(415, "unsupported_media_type",
                          f"content type {main_type!r} is not an accepted image upload")

        body = bytearray()
        async for chunk in request.stream():
            body.extend(chunk)
            if len(body) > max_upload_bytes:
                return _error(413, "payload_too_large",
                              f"upload exceeds the {max_upload_bytes} byte limit")
        data = bytes(body)
        if not data:
            return _error(400, "empty_body", "request body is empty")

        try:
            if is_multipart:
                data = extract_image_from_multipart(content_type, data)
            result = await asyncio.wait_for(
                asyncio.to_thread(classify_bytes, bundle, data, effective_threshold),
                timeout=timeout_seconds,
            )
        except InputError as exc:
            if "unsupported file part" in str(exc):
                return _error(415, "unsupported_media_type", str(exc))
            return _error(400, "undecodable_image", str(exc))
        except asyncio.TimeoutError:
            return _error(504, "timeout",
                          f"classification exceeded {timeout_seconds} seconds")
        return result.to_dict()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def serve(model_path, host: str = "127.0.0.1", port: int = 8000,
          threshold: float | None = None,
          cors_origins: tuple[str, ...] = ("*",),
          static_dir=None) -> None:
    """Load the model once and run the service until interrupted."""
    import uvicorn

    app = create_app(bundle=ModelBundle.from_file(model_path),
                     threshold=threshold, cors_origins=cors_origins,
                     static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
