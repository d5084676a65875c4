"""Glyph template bank: per-category ink/hole vote tables built from fonts.

Each character category is rendered once per font, cropped to its tight
ink box and stretched (anisotropically) onto a fixed G x G grid, so the
grid frame is exactly the character's tight box frame. Hole pixels are
background cells sealed off from the grid border (4-connectivity). Vote
tables count, per grid cell, how many fonts put ink (or a hole) there;
consensus masks keep cells whose vote fraction reaches a threshold.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import (
    EmptyTemplateSet,
    FontLoadError,
    InsufficientFonts,
    MissingGlyph,
    UnknownCategory,
)
from .raster import BitMask, holes

GRID_SIZE = 64
RENDER_SIZE = 256
DEFAULT_TAU = 0.6

ALNUM = [chr(c) for c in range(ord("A"), ord("Z") + 1)]
ALNUM += [chr(c) for c in range(ord("a"), ord("z") + 1)]
ALNUM += [chr(c) for c in range(ord("0"), ord("9") + 1)]

FONT_SUFFIXES = (".ttf", ".otf", ".ttc")


def parse_categories(spec: str) -> list[str]:
    """Category spec: the preset name 'alnum' or a literal character list."""
    if spec == "alnum":
        return list(ALNUM)
    cats = [c for c in spec if not c.isspace()]
    if not cats:
        raise ValueError("empty category spec")
    return sorted(set(cats), key=cats.index)


@dataclass(frozen=True)
class GlyphTemplate:
    category: str
    font_id: str
    grid: BitMask
    hole: BitMask


@dataclass(frozen=True)
class GlyphVoteTable:
    """Per-cell ink and hole vote counts over n templates of one category."""

    category: str
    n_templates: int
    fg_counts: np.ndarray
    hole_counts: np.ndarray

    @property
    def fg_votes(self) -> np.ndarray:
        return self.fg_counts / float(self.n_templates)

    @property
    def hole_votes(self) -> np.ndarray:
        return self.hole_counts / float(self.n_templates)


def render_glyph_ink(font: ImageFont.FreeTypeFont, category: str) -> BitMask:
    """Binary render of one character, cropped to its tight ink box."""
    try:
        x0, y0, x1, y1 = font.getbbox(category)
    except (OSError, ValueError) as exc:
        raise MissingGlyph(f"{category!r}: {exc}") from exc
    if x1 <= x0 or y1 <= y0:
        raise MissingGlyph(f"{category!r} renders empty")
    pad = 8
    canvas = Image.new("L", (x1 - x0 + 2 * pad, y1 - y0 + 2 * pad), 0)
    ImageDraw.Draw(canvas).text((pad - x0, pad - y0), category, font=font, fill=255)
    ink = np.asarray(canvas) > 127
    ys, xs = np.nonzero(ink)
    if ys.size == 0:
        raise MissingGlyph(f"{category!r} renders empty after thresholding")
    return ink[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def stretch_to_grid(ink: BitMask, grid_size: int = GRID_SIZE) -> BitMask:
    """Anisotropic stretch of a tight ink raster onto grid_size^2 cells.

    A cell is set when any source ink falls in its covering rectangle
    (single-row/column sample when the cell is narrower than a source
    pixel), so tightness is preserved: ink touches all four grid borders.
    """
    h, w = ink.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(ink, axis=0), axis=1)

    def edges(n_src: int) -> tuple[np.ndarray, np.ndarray]:
        lo = (np.arange(grid_size) * n_src) // grid_size
        hi = (np.arange(1, grid_size + 1) * n_src) // grid_size
        hi = np.maximum(hi, lo + 1)
        return lo, hi

    r0, r1 = edges(h)
    c0, c1 = edges(w)
    counts = (
        integral[np.ix_(r1, c1)]
        - integral[np.ix_(r0, c1)]
        - integral[np.ix_(r1, c0)]
        + integral[np.ix_(r0, c0)]
    )
    return counts > 0


def rasterize_glyph(
    font_file: str | Path, category: str, grid_size: int = GRID_SIZE
) -> GlyphTemplate:
    """Render one category from one font into a normalized template."""
    try:
        font = ImageFont.truetype(str(font_file), RENDER_SIZE)
    except OSError as exc:
        raise FontLoadError(f"{font_file}: {exc}") from exc
    ink = render_glyph_ink(font, category)
    grid = stretch_to_grid(ink, grid_size)
    return GlyphTemplate(
        category=category,
        font_id=Path(font_file).stem,
        grid=grid,
        hole=holes(grid),
    )


def build_vote_table(templates: list[GlyphTemplate]) -> GlyphVoteTable:
    """Count, per cell, the templates voting ink and voting hole."""
    if not templates:
        raise EmptyTemplateSet("no templates")
    category = templates[0].category
    shape = templates[0].grid.shape
    for t in templates:
        if t.category != category:
            raise ValueError(f"mixed categories {category!r} vs {t.category!r}")
        if t.grid.shape != shape:
            raise ValueError("mixed grid sizes")
    fg = np.zeros(shape, dtype=np.uint16)
    hole = np.zeros(shape, dtype=np.uint16)
    for t in templates:
        fg += t.grid
        hole += t.hole
    return GlyphVoteTable(
        category=category, n_templates=len(templates), fg_counts=fg, hole_counts=hole
    )


def consensus_mask(table: GlyphVoteTable, kind: str, tau: float = DEFAULT_TAU) -> BitMask:
    """Cells whose vote fraction for ``kind`` ('foreground'|'hole') is >= tau."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if kind == "foreground":
        votes = table.fg_votes
    elif kind == "hole":
        votes = table.hole_votes
    else:
        raise ValueError(f"unknown consensus kind {kind!r}")
    return votes >= tau


@dataclass
class BankBuildReport:
    fonts_used: list[str]
    fonts_failed: dict[str, str]
    glyph_failures: dict[str, list[str]]  # category -> font ids that failed
    categories_dropped: list[str]


@dataclass
class TemplateBank:
    grid_size: int
    tables: dict[str, GlyphVoteTable]

    def table(self, category: str) -> GlyphVoteTable:
        try:
            return self.tables[category]
        except KeyError:
            raise UnknownCategory(category) from None

    def __contains__(self, category: str) -> bool:
        return category in self.tables


def list_font_files(font_dir: str | Path) -> list[Path]:
    return sorted(
        p for p in Path(font_dir).iterdir() if p.suffix.lower() in FONT_SUFFIXES
    )


def build_template_bank(
    font_dir: str | Path,
    categories: list[str] | None = None,
    grid_size: int = GRID_SIZE,
) -> tuple[TemplateBank, BankBuildReport]:
    """Build one vote table per category from every loadable font.

    Individual glyph failures are recorded, not fatal; a category is
    dropped (and reported) when fewer than 2 fonts produced a template.
    Raises InsufficientFonts when fewer than 2 fonts load at all.
    """
    categories = list(categories) if categories else list(ALNUM)
    font_files = list_font_files(font_dir)
    fonts_used: list[str] = []
    fonts_failed: dict[str, str] = {}
    loaded: list[tuple[str, Path]] = []
    for path in font_files:
        try:
            ImageFont.truetype(str(path), 16)
        except OSError as exc:
            fonts_failed[path.name] = str(exc)
            continue
        fonts_used.append(path.name)
        loaded.append((path.stem, path))
    if len(loaded) < 2:
        raise InsufficientFonts(
            f"{font_dir}: {len(loaded)} usable fonts, need at least 2"
        )
    tables: dict[str, GlyphVoteTable] = {}
    glyph_failures: dict[str, list[str]] = {}
    dropped: list[str] = []
    for category in categories:
        templates = []
        for font_id, path in loaded:
            try:
                templates.append(rasterize_glyph(path, category, grid_size))
            except (MissingGlyph, FontLoadError):
                glyph_failures.setdefault(category, []).append(font_id)
        if len(templates) >= 2:
            tables[category] = build_vote_table(templates)
        else:
            dropped.append(category)
    bank = TemplateBank(grid_size=grid_size, tables=tables)
    report = BankBuildReport(
        fonts_used=fonts_used,
        fonts_failed=fonts_failed,
        glyph_failures=glyph_failures,
        categories_dropped=dropped,
    )
    return bank, report


# -------------------------------------------------------------- bank file
#
# Bank file layout (version 1): a zip archive (numpy .npz) holding
#   meta            json: {"version", "grid_size", "categories",
#                          "n_templates": {cat: n}}
#   fg_<u+XXXX>     uint16 ink vote counts, one per category
#   hole_<u+XXXX>   uint16 hole vote counts
# Counts (not fractions) are stored so round-trips are bit-exact.

BANK_VERSION = 1


def _key(prefix: str, category: str) -> str:
    return f"{prefix}_u{ord(category):04x}"


def save_bank(bank: TemplateBank, path: str | Path) -> None:
    meta = {
        "version": BANK_VERSION,
        "grid_size": bank.grid_size,
        "categories": sorted(bank.tables),
        "n_templates": {c: t.n_templates for c, t in sorted(bank.tables.items())},
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for category in sorted(bank.tables):
        table = bank.tables[category]
        arrays[_key("fg", category)] = table.fg_counts
        arrays[_key("hole", category)] = table.hole_counts
    # npz-compatible zip written with pinned entry metadata so identical
    # banks produce identical bytes
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            payload = io.BytesIO()
            np.lib.format.write_array(payload, np.ascontiguousarray(arr))
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload.getvalue())
    Path(path).write_bytes(buf.getvalue())


def load_bank(path: str | Path) -> TemplateBank:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != BANK_VERSION:
            raise ValueError(f"{path}: unsupported bank version {meta.get('version')}")
        tables = {}
        for category in meta["categories"]:
            tables[category] = GlyphVoteTable(
                category=category,
                n_templates=int(meta["n_templates"][category]),
                fg_counts=data[_key("fg", category)],
                hole_counts=data[_key("hole", category)],
            )
    return TemplateBank(grid_size=int(meta["grid_size"]), tables=tables)


def bundled_font_dir() -> Path:
    """Fonts shipped with the package for default bank builds."""
    return Path(__file__).parent / "data" / "fonts"


def heldout_font_dir() -> Path:
    """Fonts shipped for synthetic rendering, disjoint from the bank set."""
    return Path(__file__).parent / "data" / "fonts_heldout"
