"""HTTP client for a remote model service speaking the wire protocol.

Endpoints (JSON envelopes, binary payloads base64):

    POST /segment      {image_b64, box: [x1,y1,x2,y2], pos_points, neg_points}
                       -> {mask_b64, logits_b64, shape: [h,w], score}
    POST /detect_chars {image_b64} -> {boxes: [[x1,y1,x2,y2,conf], ...]}
    POST /recognize    {image_b64} -> {text, confidences}
    GET  /health       -> {status, models}

Crops (the box region plus a 10% context margin) are sent instead of the
full image to bound payload size; box and point coordinates in the
request are expressed in the crop frame. ``/segment`` responses carry the
mask and logits at the requested box extent. Any response violating the
contract (shape mismatch, mask != logits > 0) raises ProtocolError;
transport failures are retried with bounded exponential backoff and then
surface as BackendUnavailable.
"""

from __future__ import annotations

import base64
import io
import time

import httpx
import numpy as np
from PIL import Image

from .backends import (
    DetectedBox,
    RecognitionResult,
    SegmentRequest,
    SegmentResponse,
)
from .errors import BackendUnavailable, ProtocolError
from .raster import BBox, BitMask

RETRY_BACKOFFS = (0.5, 1.0, 2.0)
CROP_MARGIN = 0.10


def encode_image_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image_b64(data: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(data))) as img:
        return np.asarray(img)


def decode_mask_b64(data: str) -> BitMask:
    with Image.open(io.BytesIO(base64.b64decode(data))) as img:
        return np.asarray(img.convert("L")) >= 128


def decode_logits_b64(data: str, shape: tuple[int, int]) -> np.ndarray:
    raw = base64.b64decode(data)
    expected = shape[0] * shape[1] * 4
    if len(raw) != expected:
        raise ProtocolError(f"logits payload {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def crop_with_margin(image: np.ndarray, box: BBox, margin: float = CROP_MARGIN) -> BBox:
    """Box grown by ``margin`` of its size, clamped to the image."""
    h, w = image.shape[:2]
    mx = max(1, int(round(box.width * margin)))
    my = max(1, int(round(box.height * margin)))
    grown = BBox(box.x_min - mx, box.y_min - my, box.x_max + mx, box.y_max + my)
    return grown.clip(w, h)


class RemoteBackend:
    """Client for all three model roles behind one service endpoint."""

    def __init__(
        self,
        endpoint: str,
        max_in_flight: int = 4,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        sleeper=time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.max_in_flight = max_in_flight
        self._sleep = sleeper
        self._client = httpx.Client(
            base_url=self.endpoint, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt, backoff in enumerate((0.0,) + RETRY_BACKOFFS):
            if backoff:
                self._sleep(backoff)
            try:
                response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 503:
                last_error = BackendUnavailable(f"{path}: service not ready")
                continue
            if response.status_code != 200:
                raise ProtocolError(f"{path}: HTTP {response.status_code}")
            try:
                return response.json()
            except ValueError as exc:
                raise ProtocolError(f"{path}: non-JSON response") from exc
        raise BackendUnavailable(f"{path}: {last_error}")

    def health(self) -> dict:
        try:
            response = self._client.get("/health")
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise BackendUnavailable(f"/health: HTTP {response.status_code}")
        return response.json()

    # -- segmenter role

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        request.validate()
        crop_box = crop_with_margin(request.image, request.box)
        crop = request.image[
            crop_box.y_min : crop_box.y_max, crop_box.x_min : crop_box.x_max
        ]
        box = request.box
        payload = {
            "image_b64": encode_image_b64(crop),
            "box": [
                box.x_min - crop_box.x_min,
                box.y_min - crop_box.y_min,
                box.x_max - crop_box.x_min,
                box.y_max - crop_box.y_min,
            ],
            "pos_points": [
                [p.x - crop_box.x_min, p.y - crop_box.y_min] for p in request.positives
            ],
            "neg_points": [
                [p.x - crop_box.x_min, p.y - crop_box.y_min] for p in request.negatives
            ],
        }
        data = self._post("/segment", payload)
        return parse_segment_response(data, box)

    # -- detector role

    def detect_chars(
        self, image_id: str, image: np.ndarray, word_box: BBox
    ) -> list[DetectedBox]:
        crop_box = crop_with_margin(image, word_box)
        crop = image[crop_box.y_min : crop_box.y_max, crop_box.x_min : crop_box.x_max]
        data = self._post("/detect_chars", {"image_b64": encode_image_b64(crop)})
        boxes = data.get("boxes")
        if boxes is None:
            raise ProtocolError("/detect_chars: missing 'boxes'")
        out = []
        for entry in boxes:
            if len(entry) != 5:
                raise ProtocolError(f"/detect_chars: bad box entry {entry!r}")
            x1, y1, x2, y2, conf = entry
            box = BBox(
                int(x1) + crop_box.x_min,
                int(y1) + crop_box.y_min,
                int(x2) + crop_box.x_min,
                int(y2) + crop_box.y_min,
            ).intersect(word_box)
            if box is not None:
                out.append(DetectedBox(bbox=box, confidence=float(conf)))
        return out

    # -- recognizer role

    def recognize(self, image_id: str, image: np.ndarray, box: BBox) -> RecognitionResult:
        crop = image[box.y_min : box.y_max, box.x_min : box.x_max]
        data = self._post("/recognize", {"image_b64": encode_image_b64(crop)})
        if "text" not in data or "confidences" not in data:
            raise ProtocolError("/recognize: missing fields")
        text = str(data["text"])
        confidences = tuple(float(c) for c in data["confidences"])
        if len(confidences) != len(text):
            raise ProtocolError("/recognize: confidences misaligned with text")
        return RecognitionResult(text=text, confidences=confidences)


def parse_segment_response(data: dict, box: BBox) -> SegmentResponse:
    """Decode and contract-check a /segment response body."""
    for key in ("mask_b64", "logits_b64", "shape", "score"):
        if key not in data:
            raise ProtocolError(f"/segment: missing '{key}'")
    shape = tuple(int(v) for v in data["shape"])
    if shape != (box.height, box.width):
        raise ProtocolError(f"/segment: shape {shape} != box extent {(box.height, box.width)}")
    mask = decode_mask_b64(data["mask_b64"])
    if mask.shape != shape:
        raise ProtocolError(f"/segment: mask shape {mask.shape} != {shape}")
    logits = decode_logits_b64(data["logits_b64"], shape)
    if not np.array_equal(mask, logits > 0):
        raise ProtocolError("/segment: mask does not equal logits > 0")
    score = float(data["score"])
    if not 0.0 <= score <= 1.0:
        raise ProtocolError(f"/segment: score {score} outside [0, 1]")
    return SegmentResponse(mask=mask, logits=logits, score=score)
