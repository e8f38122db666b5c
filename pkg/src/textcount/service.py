"""HTTP counting service.

Endpoints (JSON API, CORS-enabled):

* ``POST /api/count`` - multipart form (``image`` file + ``description``
  field) or a JSON body (``image_b64`` + ``description``).  Optional
  fields: ``return_overlay`` (default true), ``window_side``, ``stride``.
  Returns the raw and rounded count, per-window counts, density shape,
  timing, the model id, and (optionally) a base64 density-overlay PNG.
* ``GET /api/health`` - liveness plus whether a model is loaded.
* ``GET /api/model``  - model/checkpoint metadata.

Error responses always carry a ``{"code": ..., "message": ...}`` JSON
body: missing/empty description → 400, undecodable image → 415, payload
over the configured limit (default 16 MiB) → 413, no model loaded → 503.

One model is loaded at startup and shared read-only across requests;
restart the process to change checkpoints.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

from .inference import InferenceSettings, predict
from .overlay import overlay_png_bytes

DEFAULT_MAX_PAYLOAD = 16 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def rounded_count(count: float) -> int:
    """Nearest integer, half rounding up (counts are nonnegative)."""
    return int(np.floor(count + 0.5))


def create_app(model=None, *, model_id: str = "none",
               settings: InferenceSettings | None = None,
               max_payload: int = DEFAULT_MAX_PAYLOAD,
               ui_dir=None) -> FastAPI:
    """Build the application around one preloaded model (or none)."""
    app = FastAPI(title="text-specified counting service", docs_url=None,
                  redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    state = app.state
    state.model = model
    state.model_id = model_id
    state.settings = settings or InferenceSettings()
    state.max_payload = max_payload
    state.requests_served = 0
    state.counter_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def _api_error(_request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.get("/api/health")
    async def health():
        return {"status": "ok", "model_loaded": state.model is not None,
                "requests_served": state.requests_served}

    @app.get("/api/model")
    async def model_info():
        if state.model is None:
            return {"loaded": False, "model_id": state.model_id}
        metadata = getattr(state.model, "checkpoint_metadata", {}) or {}
        config = getattr(state.model, "config", None)
        config_dict = config.to_dict() if hasattr(config, "to_dict") else {}
        return {"loaded": True, "model_id": state.model_id,
                "checkpoint_metadata": metadata, "config": config_dict}

    @app.post("/api/count")
    async def count(request: Request):
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > state.max_payload:
            raise ApiError(413, "payload_too_large",
                           f"payload exceeds {state.max_payload} bytes")
        if state.model is None:
            raise ApiError(503, "model_not_loaded",
                           "no model checkpoint is loaded")

        image_bytes, description, options = await _parse_request(request, state)
        image = _decode_image(image_bytes)
        run_settings = _settings_from_options(state.settings, options)

        start = time.perf_counter()
        result = predict(state.model, image, description, settings=run_settings)
        elapsed_ms = (time.perf_counter() - start) * 1000.0

        with state.counter_lock:
            state.requests_served += 1

        body = {
            "count": result.count,
            "rounded_count": rounded_count(result.count),
            "window_counts": result.window_counts,
            "density_shape": list(result.density.data.shape),
            "elapsed_ms": elapsed_ms,
            "model_id": state.model_id,
            "prompt": result.prompt,
        }
        if options.get("return_overlay", True):
            png = overlay_png_bytes(image, result.density)
            body["overlay"] = base64.b64encode(png).decode("ascii")
        if options.get("return_density", False):
            body["density"] = result.density.data.tolist()
            body["density_scale"] = result.density.scale
        return body

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


async def _parse_request(request: Request, state) -> tuple[bytes, str, dict]:
    content_type = request.headers.get("content-type", "")
    if content_type.startswith("multipart/form-data"):
        form = await request.form()
        upload = form.get("image")
        if upload is None or isinstance(upload, str):
            raise ApiError(400, "missing_image", "multipart field 'image' is required")
        image_bytes = await upload.read()
        description = form.get("description")
        options = {key: form.get(key) for key in
                   ("return_overlay", "return_density", "window_side", "stride")
                   if form.get(key) is not None}
    elif content_type.startswith("application/json") or not content_type:
        try:
            payload = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError as exc:
            raise ApiError(400, "invalid_json", f"request body is not JSON: {exc}")
        if not isinstance(payload, dict):
            raise ApiError(400, "invalid_json", "JSON body must be an object")
        b64 = payload.get("image_b64")
        if not isinstance(b64, str) or not b64:
            raise ApiError(400, "missing_image", "JSON field 'image_b64' is required")
        try:
            image_bytes = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError):
            raise ApiError(415, "undecodable_image", "image_b64 is not valid base64")
        description = payload.get("description")
        options = {key: payload[key] for key in
                   ("return_overlay", "return_density", "window_side", "stride")
                   if key in payload}
    else:
        raise ApiError(400, "unsupported_content_type",
                       f"cannot handle content type {content_type!r}")

    if len(image_bytes) > state.max_payload:
        raise ApiError(413, "payload_too_large",
                       f"image exceeds {state.max_payload} bytes")
    if not isinstance(description, str) or not description.strip():
        raise ApiError(400, "missing_description",
                       "field 'description' must be a non-empty string")
    return image_bytes, description.strip(), _normalize_options(options)


def _normalize_options(options: dict) -> dict:
    out = {}
    for key in ("return_overlay", "return_density"):
        if key in options:
            value = options[key]
            if isinstance(value, str):
                value = value.strip().lower() not in ("0", "false", "no", "")
            out[key] = bool(value)
    for key in ("window_side", "stride"):
        if key in options:
            try:
                parsed = int(options[key])
            except (TypeError, ValueError):
                raise ApiError(400, "invalid_option", f"{key} must be an integer")
            if parsed < 1:
                raise ApiError(400, "invalid_option", f"{key} must be positive")
            out[key] = parsed
    return out


def _settings_from_options(base: InferenceSettings, options: dict) -> InferenceSettings:
    if "window_side" not in options and "stride" not in options:
        return base
    return InferenceSettings(
        working_height=base.working_height,
        window_side=options.get("window_side", base.window_side),
        stride=options.get("stride", base.stride))


def _decode_image(image_bytes: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(image_bytes)) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError):
        raise ApiError(415, "undecodable_image",
                       "image payload is not a decodable PNG/JPEG")


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn
    uvicorn.run(app, host=host, port=port, log_level="info")
