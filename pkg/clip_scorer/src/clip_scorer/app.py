"""FastAPI application implementing the scoring wire protocol.

POST /score with {"prompt": str, "images": [base64 PNG, ...]} returns
{"similarities": [float, ...]}, one cosine similarity per image. GET /health
reports the loaded model. Responses are canonical JSON (sorted keys, compact
separators) so recorded fixtures are byte-stable.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, Response
from PIL import Image, UnidentifiedImageError

from .encoder import DEFAULT_MODEL


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8650
    model: str = DEFAULT_MODEL
    device: str = "cpu"
    max_batch_size: int = 16

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")


class ProtocolError(ValueError):
    pass


def canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8")


def parse_score_request(body: bytes) -> tuple[str, list[Image.Image]]:
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc}")
    if not isinstance(payload, dict):
        raise ProtocolError("request body must be a JSON object")
    prompt = payload.get("prompt")
    images_b64 = payload.get("images")
    if not isinstance(prompt, str) or not prompt:
        raise ProtocolError("'prompt' must be a nonempty string")
    if not isinstance(images_b64, list) or not images_b64:
        raise ProtocolError("'images' must be a nonempty list of base64 PNGs")
    images = []
    for i, blob in enumerate(images_b64):
        if not isinstance(blob, str):
            raise ProtocolError(f"images[{i}] is not a base64 string")
        try:
            raw = base64.b64decode(blob, validate=True)
        except (binascii.Error, ValueError):
            raise ProtocolError(f"images[{i}] is not valid base64")
        try:
            img = Image.open(io.BytesIO(raw))
            img.load()
        except (UnidentifiedImageError, OSError):
            raise ProtocolError(f"images[{i}] does not decode as an image")
        images.append(img.convert("RGB"))
    return prompt, images


def score_payload(encoder, prompt: str, images) -> dict:
    text_vec = encoder.embed_text(prompt)
    image_vecs = encoder.embed_images(images)
    sims = image_vecs @ text_vec
    return {"similarities": [float(s) for s in np.clip(sims, -1.0, 1.0)]}


def create_app(encoder) -> FastAPI:
    app = FastAPI(title="clip-scorer", docs_url=None, redoc_url=None)

    @app.get("/health")
    def health():
        return Response(
            canonical_json({"status": "ok", "model": encoder.name}),
            media_type="application/json",
        )

    @app.post("/score")
    async def score(request: Request):
        body = await request.body()
        try:
            prompt, images = parse_score_request(body)
        except ProtocolError as exc:
            return Response(
                canonical_json({"error": str(exc)}),
                status_code=400,
                media_type="application/json",
            )
        try:
            payload = score_payload(encoder, prompt, images)
        except Exception as exc:  # model failure
            return Response(
                canonical_json({"error": f"scoring failed: {exc}"}),
                status_code=500,
                media_type="application/json",
            )
        return Response(canonical_json(payload), media_type="application/json")

    return app
