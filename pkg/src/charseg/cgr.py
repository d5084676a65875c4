"""Character Glyph Refinement: glyph-consensus point prompts.

Consensus masks live in the normalized G x G template frame, which is
the character's tight-box frame: the glyph normalization stretched the
template's tight ink box onto the grid, and the character's box is (an
estimate of) the same tight box in image space, so mapping the grid
affinely onto the box cancels the two distortions.

Points are drawn one per consensus connected component (largest first)
at the component's interior depth maximum, cycling over components with
next-deepest cells until the point budget is reached. Every multi-counter
category ('B', 'g', '8') therefore receives a negative in each counter,
and every disconnected glyph part ('i', 'j') a positive, before any
component gets a second point. Interior depth ordering keeps all samples
in cells that generalize across fonts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotations import CharAnnotation
from .glyphs import DEFAULT_TAU, TemplateBank, consensus_mask
from .raster import BBox, BitMask, Point, connected_components, distance_transform

K_POS_DEFAULT = 5
K_NEG_DEFAULT = 3


@dataclass(frozen=True)
class PromptSet:
    box: BBox
    positives: tuple[Point, ...]
    negatives: tuple[Point, ...]
    category: str

    def __post_init__(self):
        for p in self.positives + self.negatives:
            if not self.box.contains(p):
                raise ValueError(f"point {p} outside box {self.box}")
        if set(self.positives) & set(self.negatives):
            raise ValueError("positive/negative point collision")


def map_template_point(p: Point, box: BBox, grid_size: int) -> Point:
    """Template cell -> image pixel: cell centers scale affinely onto the
    box, round to nearest (ties toward zero, so the identity scale maps
    cell t to pixel x_min + t), then clamp into the box's pixel range."""
    x = box.x_min + (p.x + 0.5) * box.width / grid_size
    y = box.y_min + (p.y + 0.5) * box.height / grid_size
    xi = min(max(math.ceil(x - 0.5), box.x_min), box.x_max - 1)
    yi = min(max(math.ceil(y - 0.5), box.y_min), box.y_max - 1)
    return Point(xi, yi)


def template_cell_of(q: Point, box: BBox, grid_size: int) -> Point:
    """Image pixel -> covering template cell (inverse of the affine map).

    The forward map rounds a continuous coordinate to the nearest pixel
    index, so the index itself plays the coordinate role here.
    """
    tx = (q.x - box.x_min) * grid_size / box.width
    ty = (q.y - box.y_min) * grid_size / box.height
    return Point(
        min(max(int(tx), 0), grid_size - 1),
        min(max(int(ty), 0), grid_size - 1),
    )


def project_mask(mask: BitMask, box: BBox) -> BitMask:
    """Nearest-cell resample of a template-frame mask onto the box extent."""
    g = mask.shape[0]
    xs = (np.arange(box.width) * g // box.width).clip(0, g - 1)
    ys = (np.arange(box.height) * g // box.height).clip(0, g - 1)
    return mask[np.ix_(ys, xs)]


def sample_consensus_points(mask: BitMask, box: BBox, budget: int) -> tuple[Point, ...]:
    """Up to ``budget`` image points from a template-frame mask.

    Components in descending area order each contribute their deepest
    cell (chessboard distance to background, row-major tie-break);
    remaining budget cycles over the components taking next-deepest
    cells, until the budget is drawn or every cell is consumed. Depth is
    measured at template resolution, where consensus regions are thick
    enough for interior maxima to be meaningful even when the image box
    is tiny; chosen cells are then mapped onto the box. Cells that
    collapse onto an already-used pixel are dropped, so small boxes may
    yield fewer points.
    """
    if budget <= 0 or not mask.any():
        return ()
    grid_size = mask.shape[0]
    labels, comps = connected_components(mask, 8)
    depth = distance_transform(mask)
    rankings = []
    for comp in comps:
        ys, xs = np.nonzero(labels == comp.label)
        order = sorted(
            range(len(ys)), key=lambda i: (-depth[ys[i], xs[i]], ys[i], xs[i])
        )
        rankings.append([(int(ys[i]), int(xs[i])) for i in order])
    cells: list[tuple[int, int]] = []
    round_idx = 0
    while len(cells) < budget:
        took = False
        for ranking in rankings:
            if round_idx < len(ranking):
                cells.append(ranking[round_idx])
                took = True
                if len(cells) == budget:
                    break
        if not took:
            break  # every component exhausted
        round_idx += 1
    points: list[Point] = []
    for y, x in cells:
        p = map_template_point(Point(x, y), box, grid_size)
        if p not in points:
            points.append(p)
    return tuple(points)


def prompts_for_char(
    char: CharAnnotation,
    bank: TemplateBank,
    tau: float = DEFAULT_TAU,
    k_pos: int = K_POS_DEFAULT,
    k_neg: int = K_NEG_DEFAULT,
) -> PromptSet:
    """Build the box + point prompt set for one character.

    Raises UnknownCategory when the bank lacks the character's category
    (callers fall back to box-only prompting for the whole word).
    """
    table = bank.table(char.category)
    fg = consensus_mask(table, "foreground", tau)
    hole = consensus_mask(table, "hole", tau)
    positives = sample_consensus_points(fg, char.bbox, k_pos)
    negatives = sample_consensus_points(hole, char.bbox, k_neg)
    taken = set(positives)
    negatives = tuple(p for p in negatives if p not in taken)
    return PromptSet(
        box=char.bbox, positives=positives, negatives=negatives, category=char.category
    )
