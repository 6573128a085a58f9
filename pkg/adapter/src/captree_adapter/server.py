"""FastAPI service exposing the five inference endpoints.

Request flow per endpoint: payload validation (400 on malformed bodies,
including the fixed frame counts for window embedding and video
captioning), canned-store lookup when configured, then the configured
role driver. Unconfigured roles answer with a structured refusal; a
driver that is still loading answers 503. Every served call is appended
to ``app.state.call_log`` with its generation parameters.
"""

from __future__ import annotations

import logging
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .canned import CannedStore
from .config import ROLES, AdapterConfig
from .drivers import DriverError, DriverLoading, make_driver

logger = logging.getLogger(__name__)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"message": message}})


def _require(payload: dict, fields: dict[str, type]) -> str | None:
    if not isinstance(payload, dict):
        return "body must be a JSON object"
    for name, expected in fields.items():
        if name not in payload:
            return f"missing field {name!r}"
        if not isinstance(payload[name], expected):
            return f"field {name!r} has wrong type"
    return None


def create_app(config: AdapterConfig) -> FastAPI:
    app = FastAPI(title="captree model adapter")
    drivers = {role: make_driver(role, cfg) for role, cfg in config.roles.items()}
    store = CannedStore(config.canned_dir) if config.canned_dir else None
    app.state.config = config
    app.state.call_log = []

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _error(400, "malformed request body")

    def dispatch(role: str, payload: dict, compute) -> Any:
        if store is not None:
            cached = store.get(role, payload)
            if cached is not None:
                app.state.call_log.append({"role": role, "source": "canned"})
                return JSONResponse(cached)
        driver = drivers.get(role)
        if driver is None:
            return _error(400, f"role {role!r} is not configured on this adapter")
        try:
            body = compute(driver)
        except DriverLoading as exc:
            return _error(503, str(exc))
        except DriverError as exc:
            return _error(500, str(exc))
        if store is not None:
            if not config.record:
                return _error(400, f"no canned response for this {role} request")
            store.put(role, payload, body)
        return JSONResponse(body)

    @app.post("/embed_window")
    async def embed_window(request: Request):
        payload = await request.json()
        problem = _require(payload, {"frames": list, "count": int})
        if problem:
            return _error(400, problem)
        frames = payload["frames"]
        expected = config.roles.get("embed_window")
        width = expected.frames_per_window if expected else 64
        if payload["count"] != len(frames) or len(frames) != width:
            return _error(400, f"embed_window requires exactly {width} frames")
        if not all(isinstance(f, str) and f for f in frames):
            return _error(400, "frames must be nonempty strings")

        def compute(driver):
            app.state.call_log.append({"role": "embed_window", "n_frames": len(frames)})
            return {"vector_per_frame": driver.embed_window(frames)}

        return dispatch("embed_window", payload, compute)

    @app.post("/caption_image")
    async def caption_image(request: Request):
        payload = await request.json()
        problem = _require(payload, {"image_ref": str, "prompt": str})
        if problem:
            return _error(400, problem)

        def compute(driver):
            app.state.call_log.append({"role": "caption_image", "prompt": payload["prompt"]})
            return {"text": driver.caption(payload["image_ref"], payload["prompt"])}

        return dispatch("caption_image", payload, compute)

    @app.post("/caption_video")
    async def caption_video(request: Request):
        payload = await request.json()
        problem = _require(payload, {"frame_refs": list, "prompt": str})
        if problem:
            return _error(400, problem)
        refs = payload["frame_refs"]
        expected = config.roles.get("caption_video")
        width = expected.video_frames if expected else 32
        if len(refs) != width:
            return _error(400, f"caption_video requires exactly {width} frame refs")

        def compute(driver):
            app.state.call_log.append({"role": "caption_video", "prompt": payload["prompt"]})
            return {"text": driver.caption("|".join(refs), payload["prompt"])}

        return dispatch("caption_video", payload, compute)

    @app.post("/complete")
    async def complete(request: Request):
        payload = await request.json()
        problem = _require(payload, {"prompt": str, "max_tokens": int, "reasoning_effort": str})
        if problem:
            return _error(400, problem)
        if payload["reasoning_effort"] not in ("low", "medium", "high"):
            return _error(400, "reasoning_effort must be low, medium or high")
        schema = payload.get("response_schema")
        if schema is not None and not isinstance(schema, dict):
            return _error(400, "response_schema must be an object")

        def compute(driver):
            app.state.call_log.append(
                {
                    "role": "complete",
                    "max_tokens": payload["max_tokens"],
                    "reasoning_effort": payload["reasoning_effort"],
                }
            )
            return {
                "text": driver.complete(
                    payload["prompt"], payload["max_tokens"], payload["reasoning_effort"], schema
                )
            }

        return dispatch("complete", payload, compute)

    @app.post("/embed_text")
    async def embed_text(request: Request):
        payload = await request.json()
        problem = _require(payload, {"text": str})
        if problem:
            return _error(400, problem)

        def compute(driver):
            app.state.call_log.append({"role": "embed_text"})
            return {"vector": driver.embed_text(payload["text"])}

        return dispatch("embed_text", payload, compute)

    @app.get("/healthz")
    async def healthz():
        status = {role: drivers[role].ready() for role in drivers}
        missing = [r for r in ROLES if r not in drivers]
        return {"roles": status, "unconfigured": missing}

    return app
