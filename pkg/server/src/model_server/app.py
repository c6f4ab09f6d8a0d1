"""HTTP service implementing the /v1 scoring protocol.

* ``GET /v1/meta`` -> ``{"n_classes": 1000, "input_shape": [3, 224, 224],
  "labels": [...]?}``
* ``POST /v1/score`` with ``{"shape": [N, C, H, W], "dtype": "f32le",
  "data": "<base64 row-major little-endian f32>"}`` ->
  ``{"probs": [[...] x N]}``

Pixels arrive in [0, 1]; normalization happens server-side.  Malformed
requests get HTTP 400 with a JSON error body; batches over the limit get
HTTP 413.  Inference runs under a lock, so concurrent requests serialize
at the model and responses stay deterministic.
"""

from __future__ import annotations

import base64
import binascii
import threading

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .models import ServedModel

DEFAULT_MAX_BATCH = 64


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message})


def create_app(model: ServedModel, max_batch: int = DEFAULT_MAX_BATCH) -> FastAPI:
    app = FastAPI(title="scb-model-server")
    lock = threading.Lock()

    @app.get("/v1/meta")
    def meta():
        return model.meta()

    @app.post("/v1/score")
    async def score(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _bad_request("body is not valid JSON")
        if not isinstance(payload, dict):
            return _bad_request("body must be a JSON object")

        shape = payload.get("shape")
        if (
            not isinstance(shape, list)
            or len(shape) != 4
            or not all(isinstance(v, int) and v > 0 for v in shape)
        ):
            return _bad_request("shape must be [N, C, H, W] positive integers")
        if tuple(shape[1:]) != model.input_shape:
            return _bad_request(
                f"shape {shape} does not match model input {list(model.input_shape)}"
            )
        if shape[0] > max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {shape[0]} exceeds the limit of {max_batch}"},
            )
        if payload.get("dtype") != "f32le":
            return _bad_request("dtype must be 'f32le'")
        data = payload.get("data")
        if not isinstance(data, str):
            return _bad_request("data must be a base64 string")
        try:
            raw = base64.b64decode(data, validate=True)
        except (binascii.Error, ValueError):
            return _bad_request("data is not valid base64")
        expected = 4 * int(np.prod(shape))
        if len(raw) != expected:
            return _bad_request(f"data holds {len(raw)} bytes, expected {expected}")

        batch = torch.from_numpy(
            np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        )
        with lock:
            probs = model.score(batch)
        return {"probs": probs.numpy().tolist()}

    return app
