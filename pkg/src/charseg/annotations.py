"""Manifest ingestion and mask/annotation export.

Input manifest schema (JSON, version 1):

    {
      "version": 1,
      "images": [
        {"id": "img0", "file": "images/img0.png", "width": 640, "height": 480,
         "words": [{"quad": [x1, y1, x2, y2, x3, y3, x4, y4], "text": "HI"}]}
      ]
    }

Quads are stored clockwise (image convention, y pointing down); loading
reorders counter-clockwise input. Output layout under ``out_dir``:

    masks/<id>.png   single-channel PNG, background 0 / text 255
    chars/<id>.json  per-character boxes and categories in reading order
    index.json       id -> file mapping
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ExportError, ParseError, SchemaError, ValidationError
from .raster import BBox, BitMask, Point

MANIFEST_VERSION = 1

Quad = tuple[Point, Point, Point, Point]


def strip_spaces(text: str) -> str:
    """Drop all whitespace; space characters carry no glyph mask."""
    return "".join(text.split())


def signed_area(quad: Quad) -> float:
    """Shoelace area; positive for clockwise order with y pointing down."""
    total = 0.0
    for i in range(4):
        x0, y0 = quad[i]
        x1, y1 = quad[(i + 1) % 4]
        total += x0 * y1 - x1 * y0
    return total / 2.0


def _segments_cross(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return (v > 0) - (v < 0)

    return (
        orient(a0, a1, b0) != orient(a0, a1, b1)
        and orient(b0, b1, a0) != orient(b0, b1, a1)
        and orient(a0, a1, b0) != 0
    )


def is_self_intersecting(quad: Quad) -> bool:
    return _segments_cross(quad[0], quad[1], quad[2], quad[3]) or _segments_cross(
        quad[1], quad[2], quad[3], quad[0]
    )


def normalize_clockwise(quad: Quad) -> Quad:
    """Reverse vertex order when the quad is counter-clockwise (keeps the
    first vertex in place)."""
    if signed_area(quad) < 0:
        return (quad[0], quad[3], quad[2], quad[1])
    return quad


def enclosing_bbox(quad: Quad) -> BBox:
    """Tight axis-aligned box over the four vertices (unclamped)."""
    xs = [p.x for p in quad]
    ys = [p.y for p in quad]
    return BBox(min(xs), min(ys), max(xs) + (max(xs) == min(xs)), max(ys) + (max(ys) == min(ys)))


def bbox_as_quad(box: BBox) -> Quad:
    return (
        Point(box.x_min, box.y_min),
        Point(box.x_max, box.y_min),
        Point(box.x_max, box.y_max),
        Point(box.x_min, box.y_max),
    )


@dataclass(frozen=True)
class WordAnnotation:
    quad: Quad
    text: str

    def bbox(self) -> BBox:
        return enclosing_bbox(self.quad)


@dataclass(frozen=True)
class CharAnnotation:
    bbox: BBox
    category: str
    word_index: int
    char_index: int


@dataclass(frozen=True)
class ImageRecord:
    id: str
    file: str
    width: int
    height: int
    words: tuple[WordAnnotation, ...]


@dataclass
class DatasetManifest:
    version: int
    images: list[ImageRecord] = field(default_factory=list)

    def by_id(self) -> dict[str, ImageRecord]:
        return {rec.id: rec for rec in self.images}


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise SchemaError(f"{context}: missing field '{key}'")
    return obj[key]


def parse_manifest(data: dict, source: str = "<memory>") -> DatasetManifest:
    version = _require(data, "version", source)
    if version != MANIFEST_VERSION:
        raise SchemaError(f"{source}: unrecognized manifest version {version!r}")
    images = []
    seen_ids = set()
    for i, img in enumerate(_require(data, "images", source)):
        ctx = f"{source}: images[{i}]"
        image_id = str(_require(img, "id", ctx))
        if image_id in seen_ids:
            raise ValidationError(f"{ctx}: duplicate image id {image_id!r}")
        seen_ids.add(image_id)
        width = int(_require(img, "width", ctx))
        height = int(_require(img, "height", ctx))
        if width < 1 or height < 1:
            raise ValidationError(f"{ctx}: bad dimensions {width}x{height}")
        words = []
        for j, word in enumerate(_require(img, "words", ctx)):
            wctx = f"{ctx}.words[{j}]"
            coords = _require(word, "quad", wctx)
            if len(coords) != 8:
                raise ValidationError(f"{wctx}: quad needs 8 coordinates")
            quad = tuple(
                Point(int(coords[2 * p]), int(coords[2 * p + 1])) for p in range(4)
            )
            if is_self_intersecting(quad):
                raise ValidationError(f"{wctx}: self-intersecting quad")
            if abs(signed_area(quad)) == 0:
                raise ValidationError(f"{wctx}: degenerate quad")
            text = str(_require(word, "text", wctx)).strip()
            if not strip_spaces(text):
                raise ValidationError(f"{wctx}: empty transcription")
            words.append(WordAnnotation(quad=normalize_clockwise(quad), text=text))
        images.append(
            ImageRecord(
                id=image_id,
                file=str(_require(img, "file", ctx)),
                width=width,
                height=height,
                words=tuple(words),
            )
        )
    return DatasetManifest(version=version, images=images)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: manifest root must be an object")
    return parse_manifest(data, source=str(path))


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "version": manifest.version,
        "images": [
            {
                "id": rec.id,
                "file": rec.file,
                "width": rec.width,
                "height": rec.height,
                "words": [
                    {
                        "quad": [c for p in word.quad for c in p],
                        "text": word.text,
                    }
                    for word in rec.words
                ],
            }
            for rec in manifest.images
        ],
    }


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=1))


# ------------------------------------------------------------------ export


def save_mask_png(mask: BitMask, path: str | Path) -> None:
    img = Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def load_mask_png(path: str | Path) -> BitMask:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr >= 128


def char_to_dict(char: CharAnnotation) -> dict:
    return {
        "bbox": [char.bbox.x_min, char.bbox.y_min, char.bbox.x_max, char.bbox.y_max],
        "category": char.category,
        "word_index": char.word_index,
        "char_index": char.char_index,
    }


def char_from_dict(d: dict) -> CharAnnotation:
    return CharAnnotation(
        bbox=BBox(*d["bbox"]),
        category=d["category"],
        word_index=d["word_index"],
        char_index=d["char_index"],
    )


def export_masks(
    results: dict[str, tuple[BitMask, list[CharAnnotation]]], out_dir: str | Path
) -> dict:
    """Write one mask PNG and one character sidecar per image.

    Returns the written index ({id: {mask, chars}}), which is also saved
    as ``index.json`` in ``out_dir``.
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
        (out_dir / "chars").mkdir(parents=True, exist_ok=True)
        index = {}
        for image_id in sorted(results):
            mask, chars = results[image_id]
            mask_rel = f"masks/{image_id}.png"
            chars_rel = f"chars/{image_id}.json"
            save_mask_png(mask, out_dir / mask_rel)
            (out_dir / chars_rel).write_text(
                json.dumps([char_to_dict(c) for c in chars], indent=1)
            )
            index[image_id] = {"mask": mask_rel, "chars": chars_rel}
        (out_dir / "index.json").write_text(json.dumps(index, indent=1))
    except OSError as exc:
        raise ExportError(str(exc)) from exc
    return index
