"""HTTP endpoints implementing the annotation wire protocol.

    POST /segment      {image_b64, box, pos_points, neg_points}
                       -> {mask_b64, logits_b64, shape, score}
    POST /detect_chars {image_b64} -> {boxes: [[x1,y1,x2,y2,conf], ...]}
    POST /recognize    {image_b64} -> {text, confidences}
    GET  /health       -> {status, models}

Errors: 400 malformed request, 413 oversize image, 503 not ready.
Responses are deterministic functions of the request body; the mask is
thresholded from the logits server-side so mask == (logits > 0) holds on
every response by construction.
"""

from __future__ import annotations

import binascii

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .vision import (
    decode_image,
    detect_components,
    encode_logits,
    encode_mask_png,
    segment_crop,
)


class BadRequest(Exception):
    pass


def _require(payload: dict, key: str):
    if key not in payload:
        raise BadRequest(f"missing field '{key}'")
    return payload[key]


def _decode_checked(payload: dict, max_pixels: int):
    try:
        image = decode_image(_require(payload, "image_b64"))
    except (ValueError, OSError, binascii.Error) as exc:
        raise BadRequest(f"undecodable image_b64: {exc}") from exc
    if image.shape[0] * image.shape[1] > max_pixels:
        return image, False
    return image, True


def _parse_points(payload: dict, key: str, box, shape) -> list[tuple[int, int]]:
    points = payload.get(key, [])
    out = []
    x1, y1, x2, y2 = box
    for entry in points:
        if len(entry) != 2:
            raise BadRequest(f"{key} entries must be [x, y]")
        x, y = int(entry[0]), int(entry[1])
        if not (x1 <= x < x2 and y1 <= y < y2):
            raise BadRequest(f"{key} point ({x}, {y}) outside box {box}")
        out.append((x, y))
    return out


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    config.validate()
    app = FastAPI(title="textseg-service")
    state = {"ready": True}

    @app.exception_handler(BadRequest)
    async def bad_request_handler(request: Request, exc: BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def ensure_ready():
        if not state["ready"]:
            return JSONResponse(status_code=503, content={"error": "model not ready"})
        return None

    @app.get("/health")
    async def health():
        if not state["ready"]:
            return JSONResponse(
                status_code=503, content={"status": "loading", "models": {}}
            )
        return {"status": "ok", "models": config.model_identifiers()}

    @app.post("/segment")
    async def segment(request: Request):
        not_ready = ensure_ready()
        if not_ready:
            return not_ready
        try:
            payload = await request.json()
        except Exception as exc:
            raise BadRequest(f"invalid JSON body: {exc}") from exc
        image, small_enough = _decode_checked(payload, config.max_request_pixels)
        if not small_enough:
            return JSONResponse(status_code=413, content={"error": "image too large"})
        h, w = image.shape[:2]
        raw_box = _require(payload, "box")
        if len(raw_box) != 4:
            raise BadRequest("box must be [x1, y1, x2, y2]")
        x1, y1, x2, y2 = (int(v) for v in raw_box)
        if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
            raise BadRequest(f"box {raw_box} outside {w}x{h} crop")
        box = (x1, y1, x2, y2)
        pos = _parse_points(payload, "pos_points", box, image.shape)
        neg = _parse_points(payload, "neg_points", box, image.shape)
        mask, logits, score = segment_crop(image, box, pos, neg)
        return {
            "mask_b64": encode_mask_png(mask),
            "logits_b64": encode_logits(logits),
            "shape": [mask.shape[0], mask.shape[1]],
            "score": score,
        }

    @app.post("/detect_chars")
    async def detect_chars(request: Request):
        not_ready = ensure_ready()
        if not_ready:
            return not_ready
        try:
            payload = await request.json()
        except Exception as exc:
            raise BadRequest(f"invalid JSON body: {exc}") from exc
        image, small_enough = _decode_checked(payload, config.max_request_pixels)
        if not small_enough:
            return JSONResponse(status_code=413, content={"error": "image too large"})
        boxes = detect_components(image)
        return {"boxes": [list(b) for b in boxes]}

    @app.post("/recognize")
    async def recognize(request: Request):
        not_ready = ensure_ready()
        if not_ready:
            return not_ready
        try:
            payload = await request.json()
        except Exception as exc:
            raise BadRequest(f"invalid JSON body: {exc}") from exc
        image, small_enough = _decode_checked(payload, config.max_request_pixels)
        if not small_enough:
            return JSONResponse(status_code=413, content={"error": "image too large"})
        # the classical backend has no reading model: report no text, and
        # clients engage their recognizer-failure fallbacks
        return {"text": "", "confidences": []}

    app.state.config = config
    app.state.readiness = state
    return app
