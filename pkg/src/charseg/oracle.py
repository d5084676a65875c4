"""Deterministic oracle backends bound to synthetic scenes.

The oracle segmenter models the two qualitative failure modes of a real
prompt-based segmenter on text, at desk scale:

* fill-holes: every enclosed background region (glyph counter) of the
  ground-truth crop is ORed into the mask. A negative point inside a
  filled hole removes exactly that hole's connected region.
* truncate: the bottom ``fraction`` of the mask's vertical extent is
  removed, on a deterministic pseudo-random subset of requests (real
  segmenters drop parts of large text sporadically). A positive point on
  ground-truth ink restores the 8-connected ground-truth component
  containing it, so a point inside the removed part recovers it.

Logits are the signed chessboard distance of the final mask, hence
``mask == (logits > 0)`` by construction. Uncorrupted, the response is
exactly ground truth restricted to the box, regardless of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .backends import (
    DetectedBox,
    RecognitionResult,
    SegmentRequest,
    SegmentResponse,
)
from .raster import BBox, connected_components, holes, iou, signed_distance
from .synth import CharGroundTruth, SyntheticScene


def _box_hash(box: BBox) -> int:
    h = 2166136261
    for v in (box.x_min, box.y_min, box.x_max, box.y_max):
        h = (h ^ (v & 0xFFFFFFFF)) * 16777619 % (1 << 32)
    return h


@dataclass(frozen=True)
class CorruptionConfig:
    fill_holes: bool = False
    truncate: bool = False
    truncate_fraction: float = 0.4
    # Fraction of requests truncated, chosen by box hash. Holes are filled
    # on every request while truncation is sporadic, mirroring how often
    # the two failure modes occur: hole bleed-through afflicts every holed
    # glyph, incomplete masks only occasional (mostly large) instances.
    truncate_rate: float = 0.15
    truncate_salt: int = 0

    def truncate_applies(self, box: BBox) -> bool:
        if not self.truncate:
            return False
        h = _box_hash(box) ^ (self.truncate_salt & 0xFFFFFFFF)
        return (h % 10_000) < int(self.truncate_rate * 10_000)


class OracleSegmenter:
    """Ground-truth segmenter with configurable corruption."""

    max_in_flight = 0  # pure, unboundedly concurrent

    def __init__(
        self,
        scenes: Mapping[str, SyntheticScene],
        corruption: CorruptionConfig | None = None,
    ):
        self.scenes = scenes
        self.corruption = corruption or CorruptionConfig()

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        request.validate()
        scene = self.scenes[request.image_id]
        box = request.box
        gt = scene.global_mask[box.y_min : box.y_max, box.x_min : box.x_max]
        mask = gt.copy()
        cfg = self.corruption

        hole_labels, _ = connected_components(holes(gt), 4)
        if cfg.fill_holes:
            mask |= hole_labels > 0

        if cfg.truncate_applies(box) and mask.any():
            rows = np.nonzero(mask.any(axis=1))[0]
            y_lo, y_hi = int(rows[0]), int(rows[-1]) + 1
            cut = y_lo + int(round((1.0 - cfg.truncate_fraction) * (y_hi - y_lo)))
            mask[cut:, :] = False

        if mask.any() or gt.any():
            gt_labels, _ = connected_components(gt, 8)
            for p in request.negatives:
                ly, lx = p.y - box.y_min, p.x - box.x_min
                lab = hole_labels[ly, lx]
                if lab > 0:
                    mask &= hole_labels != lab
            for p in request.positives:
                ly, lx = p.y - box.y_min, p.x - box.x_min
                lab = gt_labels[ly, lx]
                if lab > 0:
                    mask |= gt_labels == lab

        return SegmentResponse(mask=mask, logits=signed_distance(mask), score=1.0)


def _merge_groups(n: int, pair_starts: Iterable[int]) -> list[list[int]]:
    """Adjacent merge pairs (i means chars i and i+1) unioned into runs."""
    starts = {i for i in pair_starts if 0 <= i < n - 1}
    groups = []
    i = 0
    while i < n:
        j = i
        while j in starts:
            j += 1
        groups.append(list(range(i, j + 1)))
        i = j + 1
    return groups


def random_merge_plan(
    scenes: Mapping[str, SyntheticScene], fraction: float, seed: int
) -> dict[tuple[str, int], set[int]]:
    """Pick ``fraction`` of adjacent character pairs per word to merge,
    deterministically."""
    rng = np.random.default_rng(seed)
    plan: dict[tuple[str, int], set[int]] = {}
    for image_id in sorted(scenes):
        scene = scenes[image_id]
        for word_index in range(len(scene.words)):
            n = len(scene.chars_of_word(word_index))
            chosen = {i for i in range(n - 1) if rng.random() < fraction}
            if chosen:
                plan[(image_id, word_index)] = chosen
    return plan


class OracleDetector:
    """Returns ground-truth character boxes, optionally merging configured
    adjacent pairs to exercise the splitting path."""

    max_in_flight = 0

    def __init__(
        self,
        scenes: Mapping[str, SyntheticScene],
        merges: Mapping[tuple[str, int], set[int]] | None = None,
        confidence: float = 1.0,
    ):
        self.scenes = scenes
        self.merges = dict(merges or {})
        self.confidence = confidence

    def _find_word(self, scene: SyntheticScene, word_box: BBox) -> int:
        best, best_iou = -1, -1.0
        for i, word in enumerate(scene.words):
            v = iou(word.bbox(), word_box)
            if v > best_iou:
                best, best_iou = i, v
        return best

    def detect_chars(
        self, image_id: str, image: np.ndarray, word_box: BBox
    ) -> list[DetectedBox]:
        scene = self.scenes[image_id]
        word_index = self._find_word(scene, word_box)
        chars = scene.chars_of_word(word_index)
        groups = _merge_groups(len(chars), self.merges.get((image_id, word_index), ()))
        boxes = []
        for group in groups:
            box = chars[group[0]].bbox
            for i in group[1:]:
                box = box.union(chars[i].bbox)
            boxes.append(DetectedBox(bbox=box, confidence=self.confidence))
        return boxes


class OracleRecognizer:
    """Reads the ground-truth substring under a crop: characters with at
    least half their ink inside the box, in reading order."""

    max_in_flight = 0

    def __init__(
        self,
        scenes: Mapping[str, SyntheticScene],
        empty_results: bool = False,
        confidence: float = 1.0,
    ):
        self.scenes = scenes
        self.empty_results = empty_results
        self.confidence = confidence

    def recognize(
        self, image_id: str, image: np.ndarray, box: BBox
    ) -> RecognitionResult:
        if self.empty_results:
            return RecognitionResult(text="", confidences=())
        scene = self.scenes[image_id]
        hits: list[CharGroundTruth] = []
        for char in scene.chars:
            inter = char.bbox.intersect(box)
            if inter is None:
                continue
            patch = scene.char_mask(char)
            total = int(patch.sum())
            if total == 0:
                continue
            sub = patch[
                inter.y_min - char.bbox.y_min : inter.y_max - char.bbox.y_min,
                inter.x_min - char.bbox.x_min : inter.x_max - char.bbox.x_min,
            ]
            if int(sub.sum()) * 2 >= total:
                hits.append(char)
        hits.sort(key=lambda c: (c.word_index, c.char_index))
        text = "".join(c.category for c in hits)
        return RecognitionResult(
            text=text, confidences=tuple(self.confidence for _ in text)
        )


@dataclass
class OracleBackendSet:
    segmenter: OracleSegmenter
    detector: OracleDetector
    recognizer: OracleRecognizer
    extras: dict = field(default_factory=dict)


def oracle_backends(
    scenes: Mapping[str, SyntheticScene],
    corruption: CorruptionConfig | None = None,
    merges: Mapping[tuple[str, int], set[int]] | None = None,
) -> OracleBackendSet:
    return OracleBackendSet(
        segmenter=OracleSegmenter(scenes, corruption),
        detector=OracleDetector(scenes, merges),
        recognizer=OracleRecognizer(scenes),
    )
