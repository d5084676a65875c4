"""Backend interfaces for the three model roles.

The pipeline talks to a prompt-based segmenter, a character detector and
a text recognizer exclusively through these contracts; the oracle
(`oracle` module) and the HTTP client (`remote` module) both satisfy
them. Backends declare ``max_in_flight``; the pipeline driver enforces
it (0 means unbounded).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .raster import BBox, BitMask, Point, ScoreMap


@dataclass(frozen=True)
class SegmentRequest:
    """One segmentation query: a box prompt plus point prompts, in image
    coordinates. ``image`` carries the full scene pixels; id-bound
    backends may ignore them."""

    image_id: str
    image: np.ndarray
    box: BBox
    positives: tuple[Point, ...] = ()
    negatives: tuple[Point, ...] = ()

    def validate(self) -> None:
        h, w = self.image.shape[:2]
        if self.box.clip(w, h) != self.box:
            raise ValueError(f"box {self.box} outside {w}x{h} image")
        for p in self.positives + self.negatives:
            if not self.box.contains(p):
                raise ValueError(f"point {p} outside box {self.box}")


@dataclass(frozen=True)
class SegmentResponse:
    """Mask and logits over the requested box extent; mask == logits > 0."""

    mask: BitMask
    logits: ScoreMap
    score: float


@dataclass(frozen=True)
class DetectedBox:
    bbox: BBox
    confidence: float


@dataclass(frozen=True)
class RecognitionResult:
    text: str
    confidences: tuple[float, ...] = ()

    def __post_init__(self):
        if self.confidences and len(self.confidences) != len(self.text):
            raise ValueError("confidence list must align with text")


class SegmenterBackend(Protocol):
    max_in_flight: int

    def segment(self, request: SegmentRequest) -> SegmentResponse: ...


class DetectorBackend(Protocol):
    max_in_flight: int

    def detect_chars(
        self, image_id: str, image: np.ndarray, word_box: BBox
    ) -> list[DetectedBox]: ...


class RecognizerBackend(Protocol):
    max_in_flight: int

    def recognize(
        self, image_id: str, image: np.ndarray, box: BBox
    ) -> RecognitionResult: ...


@dataclass
class BackendSet:
    """The three roles bundled, as handed to the pipeline."""

    segmenter: SegmenterBackend
    detector: DetectorBackend | None = None
    recognizer: RecognizerBackend | None = None
    extras: dict = field(default_factory=dict)
