"""Deterministic classical vision backend.

Stands in for the neural models behind the wire protocol: threshold
segmentation with point-prompt steering, connected-component character
detection, and a recognizer stub that reports no reading (clients treat
an empty reading as a recognizer miss and use their fallbacks). All
outputs are pure functions of the request bytes, so responses are
byte-reproducible.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image
from scipy import ndimage

_STRUCT_8 = np.ones((3, 3), dtype=bool)


def decode_image(image_b64: str) -> np.ndarray:
    raw = base64.b64decode(image_b64, validate=True)
    with Image.open(io.BytesIO(raw)) as img:
        return np.asarray(img.convert("RGB"))


def encode_mask_png(mask: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(
        buf, format="PNG"
    )
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_logits(logits: np.ndarray) -> str:
    return base64.b64encode(logits.astype("<f4").tobytes()).decode("ascii")


def otsu_threshold(gray: np.ndarray) -> float:
    """Classic between-class-variance maximizer over the 256-bin histogram."""
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 127.5
    levels = np.arange(256, dtype=np.float64)
    weight_lo = np.cumsum(hist)
    weight_hi = total - weight_lo
    mean_lo = np.cumsum(hist * levels)
    mean_total = mean_lo[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_lo = mean_lo / weight_lo
        mu_hi = (mean_total - mean_lo) / weight_hi
        between = weight_lo * weight_hi * (mu_lo - mu_hi) ** 2
    between[~np.isfinite(between)] = -1.0
    return float(np.argmax(between)) + 0.5


def signed_chessboard(mask: np.ndarray) -> np.ndarray:
    """Positive chessboard distance inside, negative outside; empty masks
    map to constant -1 so mask == (logits > 0) always holds."""
    mask = mask.astype(bool)
    if not mask.any():
        return np.full(mask.shape, -1.0, dtype=np.float64)
    padded = np.pad(mask, 1, constant_values=False)
    inside = ndimage.distance_transform_cdt(padded, metric="chessboard")[1:-1, 1:-1]
    outside = ndimage.distance_transform_cdt(~mask, metric="chessboard")
    return np.where(mask, inside, -outside).astype(np.float64)


def threshold_foreground(
    image: np.ndarray, pos_points: list[tuple[int, int]]
) -> np.ndarray:
    """Binary foreground by Otsu split; the darker class is foreground
    unless the majority of positive points land on the lighter class."""
    gray = np.asarray(Image.fromarray(image).convert("L"))
    cut = otsu_threshold(gray)
    dark = gray < cut
    if pos_points:
        votes_dark = sum(1 for x, y in pos_points if dark[y, x])
        if votes_dark * 2 < len(pos_points):
            return ~dark
    return dark


def segment_crop(
    image: np.ndarray,
    box: tuple[int, int, int, int],
    pos_points: list[tuple[int, int]],
    neg_points: list[tuple[int, int]],
) -> tuple[np.ndarray, np.ndarray, float]:
    """Mask + logits over the box extent, plus a coverage score."""
    x1, y1, x2, y2 = box
    fg = threshold_foreground(image, pos_points)
    labels, n = ndimage.label(fg, structure=_STRUCT_8)
    keep = fg.copy()
    if n:
        if pos_points:
            wanted = {labels[y, x] for x, y in pos_points if labels[y, x] > 0}
            # components the box overlaps also count as prompted
            box_labels = set(np.unique(labels[y1:y2, x1:x2])) - {0}
            keep = np.isin(labels, sorted(wanted | box_labels))
        for x, y in neg_points:
            lab = labels[y, x]
            if lab > 0:
                keep &= labels != lab
    mask = keep[y1:y2, x1:x2]
    logits = signed_chessboard(mask)
    score = float(mask.mean()) if mask.size else 0.0
    return mask, logits, round(score, 6)


def detect_components(
    image: np.ndarray, min_area_frac: float = 0.0005
) -> list[tuple[int, int, int, int, float]]:
    """Character candidates: foreground components, x-overlapping ones
    merged (dots join their stems), reported left to right."""
    fg = threshold_foreground(image, [])
    labels, n = ndimage.label(fg, structure=_STRUCT_8)
    if not n:
        return []
    min_area = max(4, int(min_area_frac * fg.size))
    slices = ndimage.find_objects(labels)
    boxes = []
    for idx, sl in enumerate(slices, start=1):
        area = int((labels[sl] == idx).sum())
        if area < min_area:
            continue
        sy, sx = sl
        boxes.append([sx.start, sy.start, sx.stop, sy.stop])
    boxes.sort(key=lambda b: (b[0], b[1]))
    merged: list[list[int]] = []
    for box in boxes:
        if merged:
            last = merged[-1]
            overlap = min(last[2], box[2]) - max(last[0], box[0])
            if overlap > 0 and overlap * 2 >= min(last[2] - last[0], box[2] - box[0]):
                last[0] = min(last[0], box[0])
                last[1] = min(last[1], box[1])
                last[2] = max(last[2], box[2])
                last[3] = max(last[3], box[3])
                continue
        merged.append(list(box))
    height = image.shape[0]
    out = []
    for x1, y1, x2, y2 in merged:
        conf = round(min(1.0, (y2 - y1) / max(1.0, 0.8 * height)), 6)
        out.append((x1, y1, x2, y2, conf))
    return out
