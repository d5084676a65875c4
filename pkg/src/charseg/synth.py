"""Synthetic scene generator with exact per-character ground truth.

Scenes are white canvases with black rendered words. Characters are laid
out with a guaranteed x-gap, so per-character tight boxes (and therefore
masks) are pairwise disjoint and the global mask is their exact union.
Identical seeds produce identical scenes.

A scene bundle on disk:

    images/<id>.png   RGB render
    gt/<id>.png       global mask, 0/255
    manifest.json     annotation manifest (see annotations module)
    scenes.json       per-character boxes/categories for the oracle
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .annotations import (
    DatasetManifest,
    ImageRecord,
    WordAnnotation,
    bbox_as_quad,
    load_manifest,
    save_manifest,
    save_mask_png,
    load_mask_png,
)
from .errors import FontLoadError
from .glyphs import ALNUM, list_font_files
from .raster import BBox, BitMask

CHAR_GAP_MIN = 2
WORD_MARGIN = 4


@dataclass(frozen=True)
class CharGroundTruth:
    bbox: BBox
    category: str
    word_index: int
    char_index: int


@dataclass
class SyntheticScene:
    image_id: str
    seed: int
    width: int
    height: int
    image: np.ndarray
    words: tuple[WordAnnotation, ...]
    chars: tuple[CharGroundTruth, ...]
    global_mask: BitMask

    def char_mask(self, char: CharGroundTruth) -> BitMask:
        """Exact mask patch of one character (boxes are disjoint, so the
        global mask restricted to the box is that character's ink)."""
        b = char.bbox
        return self.global_mask[b.y_min : b.y_max, b.x_min : b.x_max]

    def chars_of_word(self, word_index: int) -> list[CharGroundTruth]:
        return [c for c in self.chars if c.word_index == word_index]

    def record(self) -> ImageRecord:
        return ImageRecord(
            id=self.image_id,
            file=f"images/{self.image_id}.png",
            width=self.width,
            height=self.height,
            words=self.words,
        )


def _render_char(font: ImageFont.FreeTypeFont, ch: str) -> tuple[BitMask, int] | None:
    """Tight binary patch for one character plus its top offset relative
    to the text draw origin (keeps baselines consistent within a word)."""
    x0, y0, x1, y1 = font.getbbox(ch)
    if x1 <= x0 or y1 <= y0:
        return None
    pad = 4
    canvas = Image.new("L", (x1 - x0 + 2 * pad, y1 - y0 + 2 * pad), 0)
    ImageDraw.Draw(canvas).text((pad - x0, pad - y0), ch, font=font, fill=255)
    ink = np.asarray(canvas) > 127
    ys, xs = np.nonzero(ink)
    if ys.size == 0:
        return None
    patch = ink[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    return patch, y0 + int(ys.min()) - pad


def _build_word(
    rng: np.random.Generator,
    font: ImageFont.FreeTypeFont,
    spec: int | str,
    categories: list[str],
) -> tuple[list[tuple[BitMask, int, int]], str] | None:
    """Render a word (given text, or ``spec`` random characters) with
    guaranteed x-gaps between tight boxes.

    Returns ([(patch, x, y_offset)], text) in word-local coordinates.
    """
    placed = []
    text = []
    x = 0
    wanted = spec if isinstance(spec, int) else len(spec)
    for pos in range(wanted):
        patch = None
        if isinstance(spec, str):
            ch = spec[pos]
            patch = _render_char(font, ch)
        else:
            for _attempt in range(8):
                ch = categories[int(rng.integers(len(categories)))]
                rendered = _render_char(font, ch)
                if rendered is not None:
                    patch = rendered
                    break
        if patch is None:
            return None
        ink, y_off = patch
        gap = max(CHAR_GAP_MIN, ink.shape[1] // 10)
        placed.append((ink, x, y_off))
        text.append(ch)
        x += ink.shape[1] + gap
    return placed, "".join(text)


def generate_scene(
    seed: int,
    font_dir: str | Path,
    *,
    image_id: str | None = None,
    canvas: tuple[int, int] = (640, 480),
    word_count: tuple[int, int] = (3, 6),
    word_length: tuple[int, int] = (2, 6),
    word_lengths: list[int] | None = None,
    words_text: list[str] | None = None,
    char_sizes: tuple[int, int] = (34, 60),
    categories: list[str] | None = None,
) -> SyntheticScene:
    """Render a deterministic scene of random words with exact ground truth.

    ``words_text`` pins exact word strings; ``word_lengths`` pins word
    count and lengths with random characters; otherwise both are drawn
    from the configured ranges.
    """
    fonts = list_font_files(font_dir)
    if not fonts:
        raise FontLoadError(f"no fonts in {font_dir}")
    categories = list(categories) if categories else list(ALNUM)
    rng = np.random.default_rng(seed)
    width, height = canvas
    image_id = image_id if image_id is not None else f"scene{seed:06d}"

    specs: list[int | str]
    if words_text is not None:
        specs = list(words_text)
    elif word_lengths is not None:
        specs = list(word_lengths)
    else:
        n_words = int(rng.integers(word_count[0], word_count[1] + 1))
        specs = [
            int(rng.integers(word_length[0], word_length[1] + 1)) for _ in range(n_words)
        ]

    global_mask = np.zeros((height, width), dtype=bool)
    words: list[WordAnnotation] = []
    chars: list[CharGroundTruth] = []
    occupied: list[BBox] = []

    for spec in specs:
        font_path = fonts[int(rng.integers(len(fonts)))]
        size = int(rng.integers(char_sizes[0], char_sizes[1] + 1))
        try:
            font = ImageFont.truetype(str(font_path), size)
        except OSError as exc:
            raise FontLoadError(f"{font_path}: {exc}") from exc
        built = _build_word(rng, font, spec, categories)
        if built is None:
            continue
        placed, text = built
        xs = [x for _, x, _ in placed]
        ws = [p.shape[1] for p, _, _ in placed]
        y_offs = [y for _, _, y in placed]
        hs = [p.shape[0] for p, _, _ in placed]
        word_w = xs[-1] + ws[-1]
        y_top = min(y_offs)
        word_h = max(y + h for y, h in zip(y_offs, hs)) - y_top
        if word_w > width - 2 * WORD_MARGIN or word_h > height - 2 * WORD_MARGIN:
            continue

        origin = None
        for _attempt in range(60):
            ox = int(rng.integers(WORD_MARGIN, width - WORD_MARGIN - word_w + 1))
            oy = int(rng.integers(WORD_MARGIN, height - WORD_MARGIN - word_h + 1))
            candidate = BBox(
                ox - WORD_MARGIN,
                oy - WORD_MARGIN,
                ox + word_w + WORD_MARGIN,
                oy + word_h + WORD_MARGIN,
            )
            if all(candidate.intersect(o) is None for o in occupied):
                origin = (ox, oy)
                occupied.append(candidate)
                break
        if origin is None:
            continue

        ox, oy = origin
        word_index = len(words)
        char_anns = []
        for char_index, ((patch, x, y_off), ch) in enumerate(zip(placed, text)):
            px = ox + x
            py = oy + (y_off - y_top)
            h, w = patch.shape
            global_mask[py : py + h, px : px + w] |= patch
            char_anns.append(
                CharGroundTruth(
                    bbox=BBox(px, py, px + w, py + h),
                    category=ch,
                    word_index=word_index,
                    char_index=char_index,
                )
            )
        word_box = BBox(ox, oy, ox + word_w, oy + word_h)
        words.append(WordAnnotation(quad=bbox_as_quad(word_box), text=text))
        chars.extend(char_anns)

    image = np.full((height, width, 3), 255, dtype=np.uint8)
    image[global_mask] = 0
    return SyntheticScene(
        image_id=image_id,
        seed=seed,
        width=width,
        height=height,
        image=image,
        words=tuple(words),
        chars=tuple(chars),
        global_mask=global_mask,
    )


# --------------------------------------------------------------- bundle io


def save_scene_bundle(scenes: list[SyntheticScene], out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    records = []
    scene_data = {}
    for scene in scenes:
        Image.fromarray(scene.image).save(out_dir / "images" / f"{scene.image_id}.png")
        save_mask_png(scene.global_mask, out_dir / "gt" / f"{scene.image_id}.png")
        records.append(scene.record())
        scene_data[scene.image_id] = {
            "seed": scene.seed,
            "chars": [
                {
                    "bbox": [c.bbox.x_min, c.bbox.y_min, c.bbox.x_max, c.bbox.y_max],
                    "category": c.category,
                    "word_index": c.word_index,
                    "char_index": c.char_index,
                }
                for c in scene.chars
            ],
        }
    save_manifest(DatasetManifest(version=1, images=records), out_dir / "manifest.json")
    (out_dir / "scenes.json").write_text(json.dumps(scene_data, indent=1))


def load_scene_bundle(bundle_dir: str | Path) -> dict[str, SyntheticScene]:
    """Rebuild scenes (image, ground truth, characters) from a bundle."""
    bundle_dir = Path(bundle_dir)
    manifest = load_manifest(bundle_dir / "manifest.json")
    scene_data = json.loads((bundle_dir / "scenes.json").read_text())
    scenes = {}
    for rec in manifest.images:
        data = scene_data[rec.id]
        with Image.open(bundle_dir / "images" / f"{rec.id}.png") as img:
            image = np.asarray(img.convert("RGB"))
        global_mask = load_mask_png(bundle_dir / "gt" / f"{rec.id}.png")
        chars = tuple(
            CharGroundTruth(
                bbox=BBox(*c["bbox"]),
                category=c["category"],
                word_index=c["word_index"],
                char_index=c["char_index"],
            )
            for c in data["chars"]
        )
        scenes[rec.id] = SyntheticScene(
            image_id=rec.id,
            seed=int(data["seed"]),
            width=rec.width,
            height=rec.height,
            image=image,
            words=rec.words,
            chars=chars,
            global_mask=global_mask,
        )
    return scenes
