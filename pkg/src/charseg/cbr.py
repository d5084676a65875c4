"""Character Bounding-box Refinement.

Turns (word box, transcription) into per-character boxes with categories:

1. a character detector proposes boxes inside the word;
2. recognized substring lengths decide which boxes cover several
   characters (the detector count vs transcription length);
3. merged boxes are split by watershed over the segmenter's logit map;
4. a minimum-cost bipartite assignment pairs boxes with transcription
   slots (reading-order position + recognition confidence).

Every path is total: recognizer failures fall back to width-proportional
apportionment, missing watershed peaks to equal slicing, a missing or
useless detector to splitting the whole word box. A word only fails when
a backend itself fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import CharAnnotation, WordAnnotation, enclosing_bbox, strip_spaces
from .backends import DetectedBox, SegmentRequest
from .errors import AlignmentFailed, InsufficientPeaks, RefinementFailed
from .raster import BBox, connected_components, watershed_partition

DETECTOR_CONFIDENCE_FLOOR = 0.3
RECOG_CROP_PAD = 0.10


@dataclass(frozen=True)
class AssignmentCost:
    order_weight: float = 1.0
    recog_weight: float = 1.0

    def __post_init__(self):
        if self.order_weight < 0 or self.recog_weight < 0:
            raise ValueError("weights must be non-negative")
        if self.order_weight + self.recog_weight == 0:
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class ReadingAxis:
    origin: tuple[float, float]
    direction: tuple[float, float]  # unit vector
    length: float

    def project(self, x: float, y: float) -> float:
        t = (x - self.origin[0]) * self.direction[0] + (y - self.origin[1]) * self.direction[1]
        return min(max(t / self.length, 0.0), 1.0) if self.length > 0 else 0.0


@dataclass(frozen=True)
class Segment:
    bbox: BBox
    substring: str

    @property
    def merged(self) -> bool:
        return len(self.substring) > 1


def reading_axis(word: WordAnnotation) -> ReadingAxis:
    """Unit direction along the quad's longer principal edge (tie goes to
    the more horizontal edge) plus a [0,1] projection along it."""
    p0, p1, p2, _ = word.quad
    e1 = (p1.x - p0.x, p1.y - p0.y)
    e2 = (p2.x - p1.x, p2.y - p1.y)
    l1 = math.hypot(*e1)
    l2 = math.hypot(*e2)
    if abs(l1 - l2) <= 1e-9:
        edge = e1 if abs(e1[0]) >= abs(e2[0]) else e2
    else:
        edge = e1 if l1 > l2 else e2
    length = math.hypot(*edge)
    if length == 0:
        direction = (1.0, 0.0)
    else:
        direction = (edge[0] / length, edge[1] / length)
    # point in increasing reading order: left-to-right, else top-to-bottom
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = (-direction[0], -direction[1])
    projections = [p.x * direction[0] + p.y * direction[1] for p in word.quad]
    lo, hi = min(projections), max(projections)
    k = projections.index(lo)
    return ReadingAxis(
        origin=(float(word.quad[k].x), float(word.quad[k].y)),
        direction=direction,
        length=hi - lo,
    )


def horizontal_reading(axis: ReadingAxis) -> bool:
    return abs(axis.direction[0]) >= abs(axis.direction[1])


def pad_box(box: BBox, frac: float, width: int, height: int) -> BBox:
    mx = max(1, int(round(box.width * frac)))
    my = max(1, int(round(box.height * frac)))
    padded = BBox(box.x_min - mx, box.y_min - my, box.x_max + mx, box.y_max + my)
    clipped = padded.clip(width, height)
    return clipped if clipped is not None else box


def _apportion(total: int, weights: list[float]) -> list[int]:
    """Split ``total`` into len(weights) positive integers proportional to
    the weights (largest-remainder, deterministic ties)."""
    m = len(weights)
    if total < m:
        raise AlignmentFailed(f"cannot give {m} boxes at least one of {total} chars")
    spare = total - m
    wsum = sum(weights) or 1.0
    quotas = [spare * w / wsum for w in weights]
    counts = [1 + int(q) for q in quotas]
    remainders = [q - int(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(m), key=lambda i: (-remainders[i], -weights[i], i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def detect_merges(
    detected: list[DetectedBox],
    transcription: str,
    recognizer,
    image_id: str,
    image: np.ndarray,
) -> list[Segment]:
    """Align detected boxes (reading order) to the transcription.

    Greedy left-to-right: each box's recognized text claims that many of
    the next transcription characters. Boxes the recognizer fails on are
    apportioned the remaining characters proportionally to box width.
    """
    text = strip_spaces(transcription)
    n = len(text)
    if not detected:
        raise AlignmentFailed("no detected boxes")
    h, w = image.shape[:2]
    lengths: list[int | None] = []
    for d in detected:
        if recognizer is None:
            lengths.append(None)
            continue
        crop = pad_box(d.bbox, RECOG_CROP_PAD, w, h)
        result = recognizer.recognize(image_id, image, crop)
        lengths.append(len(result.text) if result.text else None)
    resolved = sum(l for l in lengths if l)
    unresolved = [i for i, l in enumerate(lengths) if not l]
    if resolved > n:
        raise AlignmentFailed(f"recognized {resolved} chars for a {n}-char word")
    if unresolved:
        fallback = _apportion(
            n - resolved, [float(detected[i].bbox.width) for i in unresolved]
        )
        for i, count in zip(unresolved, fallback):
            lengths[i] = count
    elif resolved != n:
        raise AlignmentFailed(f"recognized {resolved} chars, transcription has {n}")
    segments = []
    cursor = 0
    for d, length in zip(detected, lengths):
        segments.append(Segment(bbox=d.bbox, substring=text[cursor : cursor + length]))
        cursor += length
    if cursor != n:
        raise AlignmentFailed("claimed lengths do not cover the transcription")
    return segments


def proportional_slices(box: BBox, k: int, horizontal: bool = True) -> list[BBox]:
    """Equal slices of a box along the reading axis."""
    out = []
    if horizontal:
        edges = [box.x_min + round(i * box.width / k) for i in range(k + 1)]
        for i in range(k):
            out.append(BBox(edges[i], box.y_min, max(edges[i + 1], edges[i] + 1), box.y_max))
    else:
        edges = [box.y_min + round(i * box.height / k) for i in range(k + 1)]
        for i in range(k):
            out.append(BBox(box.x_min, edges[i], box.x_max, max(edges[i + 1], edges[i] + 1)))
    return out


def valley_slices(mask: np.ndarray, box: BBox, k: int, horizontal: bool = True) -> list[BBox] | None:
    """Cut the box at the k-1 widest ink-free gaps of the mask's
    projection profile, tightening each slice to its ink.

    Returns None when the profile lacks k-1 interior gaps (touching
    characters); callers then fall back to equal slicing.
    """
    work = mask if horizontal else mask.T
    profile = work.sum(axis=0)
    filled = np.nonzero(profile)[0]
    if filled.size == 0:
        return None
    gaps = []  # (width, center) of interior zero runs
    run_start = None
    for x in range(int(filled[0]), int(filled[-1]) + 1):
        if profile[x] == 0:
            if run_start is None:
                run_start = x
        elif run_start is not None:
            gaps.append((x - run_start, (run_start + x) // 2))
            run_start = None
    if len(gaps) < k - 1:
        return None
    cuts = sorted(c for _, c in sorted(gaps, key=lambda g: (-g[0], g[1]))[: k - 1])
    bounds = [int(filled[0])] + cuts + [int(filled[-1]) + 1]
    boxes = []
    for lo, hi in zip(bounds, bounds[1:]):
        sub = work[:, lo:hi]
        cols = np.nonzero(sub.any(axis=0))[0]
        rows = np.nonzero(sub.any(axis=1))[0]
        if cols.size == 0:
            return None
        x0, x1 = lo + int(cols[0]), lo + int(cols[-1]) + 1
        y0, y1 = int(rows[0]), int(rows[-1]) + 1
        if horizontal:
            boxes.append(
                BBox(box.x_min + x0, box.y_min + y0, box.x_min + x1, box.y_min + y1)
            )
        else:
            boxes.append(
                BBox(box.x_min + y0, box.y_min + x0, box.x_min + y1, box.y_min + x1)
            )
    return boxes


def _split_is_sound(
    boxes: list[BBox], mask: np.ndarray, box: BBox, horizontal: bool
) -> bool:
    """A sound split advances strictly along the reading axis, has an
    ink-free profile column between consecutive boxes, and covers nearly
    all ink mass. Violations mean the watershed clustered markers inside
    one character: its regions then cut through a glyph (no zero-profile
    separation) or strand that glyph's remaining strokes outside every
    returned box."""
    work = mask if horizontal else mask.T
    profile = work.sum(axis=0)
    covered = np.zeros(profile.size, dtype=bool)
    for b in boxes:
        if horizontal:
            covered[max(b.x_min - box.x_min, 0) : b.x_max - box.x_min] = True
        else:
            covered[max(b.y_min - box.y_min, 0) : b.y_max - box.y_min] = True
    total = profile.sum()
    if total and profile[~covered].sum() > 0.1 * total:
        return False
    for a, b in zip(boxes, boxes[1:]):
        if horizontal:
            if b.x_min <= a.x_min:
                return False
            lo = max(a.x_max - box.x_min - 1, 0)
            hi = min(b.x_min - box.x_min + 1, profile.size)
        else:
            if b.y_min <= a.y_min:
                return False
            lo = max(a.y_max - box.y_min - 1, 0)
            hi = min(b.y_min - box.y_min + 1, profile.size)
        if lo >= hi or not (profile[lo:hi] == 0).any():
            return False
    return True


def split_merged(
    image_id: str,
    image: np.ndarray,
    segment_bbox: BBox,
    k: int,
    segmenter,
    horizontal: bool = True,
) -> list[BBox]:
    """Split one merged box into k character boxes (reading order).

    The segmenter is prompted with the box only; its logit map is
    watershed-partitioned into k regions and each region's largest
    8-connected foreground component gives a tight box. When no k peaks
    exist, or the regions do not advance along the reading axis (markers
    clustered inside one character), the box is sliced into k equal
    parts instead.
    """
    if k < 2:
        raise ValueError("split_merged needs k >= 2")
    response = segmenter.segment(SegmentRequest(image_id, image, segment_bbox))
    domain = response.mask
    boxes: list[BBox] = []
    if int(domain.sum()) >= k:
        try:
            labels = watershed_partition(response.logits, domain, k)
        except InsufficientPeaks:
            labels = None
        if labels is not None:
            for lab in range(1, k + 1):
                _, comps = connected_components(labels == lab, 8)
                if not comps:
                    boxes = []
                    break
                b = comps[0].bbox
                boxes.append(
                    BBox(
                        segment_bbox.x_min + b.x_min,
                        segment_bbox.y_min + b.y_min,
                        segment_bbox.x_min + b.x_max,
                        segment_bbox.y_min + b.y_max,
                    )
                )
    if boxes:
        if horizontal:
            boxes.sort(key=lambda b: (b.x_min, b.y_min))
        else:
            boxes.sort(key=lambda b: (b.y_min, b.x_min))
        if not _split_is_sound(boxes, domain, segment_bbox, horizontal):
            # markers clustered in one character: re-split at the widest
            # ink gaps of the projection profile instead
            boxes = valley_slices(domain, segment_bbox, k, horizontal) or []
    if not boxes:
        boxes = proportional_slices(segment_bbox, k, horizontal)
    return boxes


def assign_categories(
    boxes: list[BBox],
    transcription: str,
    recognizer,
    image_id: str,
    image: np.ndarray,
    cost: AssignmentCost,
    axis: ReadingAxis,
) -> list[tuple[BBox, str]]:
    """Minimum-cost matching of boxes to transcription slots.

    cost(i, j) = alpha * |pos_i - j/(n-1)| + beta * (1 - conf_j(crop_i));
    the beta term is dropped without a recognizer. Extra boxes (over-
    detection) stay unmatched and are discarded. Returns n (box,
    category) pairs in transcription order.
    """
    text = strip_spaces(transcription)
    n = len(text)
    m = len(boxes)
    if m < n:
        raise ValueError(f"{m} boxes for {n} categories")
    positions = [axis.project(*box.center()) for box in boxes]
    recognized: list[tuple[str, float]] = []
    if recognizer is not None and cost.recog_weight > 0:
        h, w = image.shape[:2]
        for box in boxes:
            crop = pad_box(box, RECOG_CROP_PAD, w, h)
            result = recognizer.recognize(image_id, image, crop)
            if result.text:
                recognized.append((result.text[0], result.confidences[0] if result.confidences else 1.0))
            else:
                recognized.append(("", 0.0))
    matrix = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            target = j / (n - 1) if n > 1 else 0.0
            value = cost.order_weight * abs(positions[i] - target) if n > 1 else 0.0
            if recognized:
                conf = recognized[i][1] if recognized[i][0] == text[j] else 0.0
                value += cost.recog_weight * (1.0 - conf)
            matrix[i, j] = value
    rows, cols = linear_sum_assignment(matrix)
    pairs: list[tuple[BBox, str]] = [None] * n
    for i, j in zip(rows, cols):
        pairs[j] = (boxes[i], text[j])
    return pairs


@dataclass
class RefineResult:
    chars: list[CharAnnotation]
    fallback_used: bool


def refine_word(
    image_id: str,
    image: np.ndarray,
    word: WordAnnotation,
    word_index: int,
    segmenter,
    detector=None,
    recognizer=None,
    cost: AssignmentCost | None = None,
    confidence_floor: float = DETECTOR_CONFIDENCE_FLOOR,
) -> RefineResult:
    """Refine one word annotation into per-character annotations.

    Returns exactly len(stripped transcription) characters in reading
    order, or raises RefinementFailed.
    """
    cost = cost or AssignmentCost()
    text = strip_spaces(word.text)
    n = len(text)
    if n == 0:
        raise RefinementFailed("empty transcription")
    h, w = image.shape[:2]
    word_box = enclosing_bbox(word.quad).clip(w, h)
    if word_box is None:
        raise RefinementFailed("word box outside image")
    axis = reading_axis(word)
    horizontal = horizontal_reading(axis)
    fallback_used = False

    boxes: list[BBox] = []
    if detector is not None:
        detected = [
            d
            for d in detector.detect_chars(image_id, image, word_box)
            if d.confidence >= confidence_floor and d.bbox.intersect(word_box)
        ]
        detected = [
            DetectedBox(bbox=d.bbox.intersect(word_box), confidence=d.confidence)
            for d in detected
        ]
        detected.sort(key=lambda d: axis.project(*d.bbox.center()))
        if len(detected) == n or len(detected) > n:
            boxes = [d.bbox for d in detected]
        elif detected:
            try:
                segments = detect_merges(detected, text, recognizer, image_id, image)
                for seg in segments:
                    if seg.merged:
                        boxes.extend(
                            split_merged(
                                image_id,
                                image,
                                seg.bbox,
                                len(seg.substring),
                                segmenter,
                                horizontal,
                            )
                        )
                    else:
                        boxes.append(seg.bbox)
            except AlignmentFailed:
                boxes = []
                fallback_used = True

    if not boxes:
        # no usable detector output: split the whole word box
        fallback_used = fallback_used or detector is not None
        if n == 1:
            boxes = [word_box]
        else:
            boxes = split_merged(image_id, image, word_box, n, segmenter, horizontal)

    if len(boxes) < n:
        raise RefinementFailed(f"{len(boxes)} boxes for {n} characters")
    pairs = assign_categories(
        boxes, text, recognizer, image_id, image, cost, axis
    )
    chars = []
    for char_index, (box, category) in enumerate(pairs):
        clipped = box.intersect(word_box) or box.clip(w, h)
        if clipped is None:
            raise RefinementFailed(f"character box {box} left the image")
        chars.append(
            CharAnnotation(
                bbox=clipped,
                category=category,
                word_index=word_index,
                char_index=char_index,
            )
        )
    return RefineResult(chars=chars, fallback_used=fallback_used)
