"""HTTP scoring service.

POST /v1/encode_text  {"prompt": str} -> {"embedding": [float]}
POST /v1/score        {"prompt", "width", "height", "images": [b64 f32 LE RGB],
                       "want_grad": bool}
                      -> {"loss", "similarities": [...], "grads": [b64 ...]}
GET  /v1/health       -> {"ok": true}

Gradients are returned with respect to the caller's pixel values, chained
through the encoder's own resize and normalization, so clients never need to
know the model's preprocessing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .codec import decode_array, encode_array


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    model: str = "echo"
    device: str = "cpu"
    max_batch: int = 32
    max_request_bytes: int = 256 * 1024 * 1024

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


class EncodeTextRequest(BaseModel):
    prompt: str


class ScoreRequest(BaseModel):
    prompt: str
    width: int
    height: int
    images: list[str]
    want_grad: bool = True


def create_app(config: ServiceConfig | None = None, encoder=None) -> FastAPI:
    from .encoders import build_encoder

    config = config or ServiceConfig()
    if encoder is None:
        encoder = build_encoder(config.model, device=config.device)

    app = FastAPI(title="meshforge-scorer")
    app.state.config = config
    app.state.encoder = encoder

    @app.middleware("http")
    async def limit_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > config.max_request_bytes:
            return JSONResponse({"detail": "request too large"}, status_code=413)
        return await call_next(request)

    @app.get("/v1/health")
    def health():
        return {"ok": True}

    @app.post("/v1/encode_text")
    def encode_text(req: EncodeTextRequest):
        if not req.prompt.strip():
            raise HTTPException(status_code=400, detail="prompt must be nonempty")
        e = np.asarray(encoder.encode_text(req.prompt), dtype=np.float64)
        norm = float(np.linalg.norm(e))
        if abs(norm - 1.0) > 1e-4:
            e = e / norm
        return {"embedding": [float(x) for x in e]}

    @app.post("/v1/score")
    def score(req: ScoreRequest):
        if not req.prompt.strip():
            raise HTTPException(status_code=400, detail="prompt must be nonempty")
        k = len(req.images)
        if k == 0:
            raise HTTPException(status_code=400, detail="images must be nonempty")
        if k > config.max_batch:
            raise HTTPException(
                status_code=400,
                detail=f"batch of {k} exceeds max_batch {config.max_batch}",
            )
        if req.width < 1 or req.height < 1:
            raise HTTPException(status_code=400, detail="bad image dimensions")
        shape = (req.height, req.width, 3)
        batch = np.empty((k,) + shape, dtype=np.float32)
        for i, payload in enumerate(req.images):
            try:
                batch[i] = decode_array(payload, shape)
            except ValueError as err:
                raise HTTPException(status_code=400, detail=f"images[{i}]: {err}")
        if not np.all(np.isfinite(batch)):
            raise HTTPException(status_code=400, detail="non-finite pixel values")

        loss, sims, grads = encoder.score(req.prompt, batch, req.want_grad)
        reply = {"loss": float(loss), "similarities": [float(s) for s in sims]}
        if req.want_grad:
            reply["grads"] = [encode_array(g) for g in grads]
        return reply

    return app
