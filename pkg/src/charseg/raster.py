"""Geometric and raster primitives shared by all pipeline stages.

Rasters are plain numpy arrays in row-major (y, x) layout:

* ``BitMask``  -- bool array, True = foreground
* ``ScoreMap`` -- float64 array of finite values (segmenter logits)
* ``LabelMap`` -- int32 array, 0 = unassigned/background, labels contiguous

Coordinates are integer pixel centers. Boxes are half-open
(``x_max``/``y_max`` exclusive) so area is exactly
``(x_max - x_min) * (y_max - y_min)``. Foreground connectivity is 8,
background/hole connectivity is 4. Every operation breaks ties in
row-major scan order so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import InsufficientPeaks, ShapeMismatch

BitMask = np.ndarray
ScoreMap = np.ndarray
LabelMap = np.ndarray

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)

# 8-neighbourhood in row-major order (used for deterministic flooding)
_NEIGHBOURS_8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
_NEIGHBOURS_4 = [(-1, 0), (0, -1), (0, 1), (1, 0)]


class Point(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class BBox:
    """Axis-aligned half-open pixel box. ``x_max``/``y_max`` are exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x < self.x_max and self.y_min <= p.y < self.y_max

    def intersect(self, other: "BBox") -> "BBox | None":
        x0 = max(self.x_min, other.x_min)
        y0 = max(self.y_min, other.y_min)
        x1 = min(self.x_max, other.x_max)
        y1 = min(self.y_max, other.y_max)
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )

    def clip(self, width: int, height: int) -> "BBox | None":
        """Clamp to a ``width``x``height`` raster; None if nothing remains."""
        x0, y0 = max(self.x_min, 0), max(self.y_min, 0)
        x1, y1 = min(self.x_max, width), min(self.y_max, height)
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)

    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    bbox: BBox


def iou(a: BBox, b: BBox) -> float:
    """Area IoU of two boxes, in [0, 1]."""
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ai = inter.area
    return ai / float(a.area + b.area - ai)


def mask_bbox(mask: BitMask) -> BBox | None:
    """Tight box around the foreground, or None for an empty mask."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def connected_components(
    mask: BitMask, connectivity: int = 8
) -> tuple[LabelMap, list[Component]]:
    """Label foreground components; component 1 is the largest.

    Components are relabeled in descending area order (ties keep scan
    order) and returned with their areas and tight boxes.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    struct = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    raw, n = ndimage.label(mask, structure=struct)
    if n == 0:
        return np.zeros(mask.shape, dtype=np.int32), []
    areas = np.bincount(raw.ravel())[1:]
    order = sorted(range(1, n + 1), key=lambda lab: (-int(areas[lab - 1]), lab))
    remap = np.zeros(n + 1, dtype=np.int32)
    slices = ndimage.find_objects(raw)
    comps = []
    for new_lab, old_lab in enumerate(order, start=1):
        remap[old_lab] = new_lab
        sy, sx = slices[old_lab - 1]
        comps.append(
            Component(
                label=new_lab,
                area=int(areas[old_lab - 1]),
                bbox=BBox(sx.start, sy.start, sx.stop, sy.stop),
            )
        )
    return remap[raw], comps


def flood_from_border(mask: BitMask) -> BitMask:
    """Background pixels 4-reachable from any border background pixel.

    The complement of the result within the background is the set of
    hole pixels.
    """
    background = ~mask.astype(bool)
    if not background.any():
        return np.zeros(mask.shape, dtype=bool)
    labels, n = ndimage.label(background, structure=_STRUCT_4)
    border = np.zeros(mask.shape, dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    reachable_labels = np.unique(labels[border & background])
    return np.isin(labels, reachable_labels) & background


def holes(mask: BitMask) -> BitMask:
    """Background pixels enclosed by foreground (not border-reachable)."""
    return ~mask.astype(bool) & ~flood_from_border(mask)


def distance_transform(mask: BitMask) -> ScoreMap:
    """Chessboard distance to the nearest background pixel.

    Pixels outside the raster count as background, so a mask that
    touches the border still gets finite distances.
    """
    padded = np.pad(mask.astype(bool), 1, constant_values=False)
    dist = ndimage.distance_transform_cdt(padded, metric="chessboard")
    return dist[1:-1, 1:-1].astype(np.float64)


def signed_distance(mask: BitMask) -> ScoreMap:
    """Positive chessboard distance inside the mask, negative outside.

    ``mask == (signed_distance(mask) > 0)`` holds by construction; an
    empty mask maps to a constant -1.
    """
    mask = mask.astype(bool)
    if not mask.any():
        return np.full(mask.shape, -1.0)
    inside = distance_transform(mask)
    outside = ndimage.distance_transform_cdt(~mask, metric="chessboard")
    return np.where(mask, inside, -outside.astype(np.float64))


def _nms_maxima(scores: ScoreMap, domain: BitMask, radius: int) -> list[tuple[int, int]]:
    """Strict local maxima of ``scores`` within ``domain``, thinned by NMS.

    A pixel qualifies when no in-domain pixel within the chessboard
    ``radius`` ball beats it and at least one is strictly lower (a fully
    uniform neighbourhood yields no maxima). Survivors are picked in
    descending score order; among equal scores the candidate farthest
    from the already-selected set wins (row-major on remaining ties),
    which spreads markers across plateau-heavy domains.
    """
    size = 2 * radius + 1
    neg_inf = np.full(scores.shape, -np.inf)
    pos_inf = np.full(scores.shape, np.inf)
    masked_max = np.where(domain, scores, neg_inf)
    masked_min = np.where(domain, scores, pos_inf)
    ball_max = ndimage.maximum_filter(masked_max, size=size, mode="constant", cval=-np.inf)
    ball_min = ndimage.minimum_filter(masked_min, size=size, mode="constant", cval=np.inf)
    cand = domain & (scores >= ball_max) & (ball_min < scores)
    ys, xs = np.nonzero(cand)
    candidates = sorted(zip(ys.tolist(), xs.tolist()), key=lambda p: (-scores[p], p))
    kept: list[tuple[int, int]] = []
    remaining = candidates
    while remaining:
        top = scores[remaining[0]]
        tied_end = 1
        while tied_end < len(remaining) and scores[remaining[tied_end]] == top:
            tied_end += 1
        if kept and tied_end > 1:
            # maximin spread over equal-score candidates
            def spread(p):
                return min(max(abs(p[0] - q[0]), abs(p[1] - q[1])) for q in kept)

            pick = max(remaining[:tied_end], key=lambda p: (spread(p), (-p[0], -p[1])))
        else:
            pick = remaining[0]
        kept.append(pick)
        remaining = [
            q for q in remaining if max(abs(q[0] - pick[0]), abs(q[1] - pick[1])) > radius
        ]
    return kept


def watershed_partition(scores: ScoreMap, domain: BitMask, k: int) -> LabelMap:
    """Split ``domain`` into exactly ``k`` regions by marker-based watershed.

    Markers are the top-k NMS-surviving local maxima of ``scores``
    (NMS radius ``max(2, ceil(domain_width / 2k))``); flooding proceeds
    by descending score with first-come tie-breaking, neighbours visited
    in row-major order. Domain pixels unreachable from any marker
    (disconnected islands) are attached to the nearest labeled pixel.

    Raises InsufficientPeaks when fewer than k maxima survive NMS.
    """
    if scores.shape != domain.shape:
        raise ShapeMismatch(f"scores {scores.shape} vs domain {domain.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")
    domain = domain.astype(bool)
    n_fg = int(domain.sum())
    if n_fg < k:
        raise ValueError(f"domain has {n_fg} pixels, need >= {k}")
    labels = np.zeros(domain.shape, dtype=np.int32)
    if k == 1:
        labels[domain] = 1
        return labels

    box = mask_bbox(domain)
    radius = max(2, -(-box.width // (2 * k)))
    maxima = _nms_maxima(scores, domain, radius)
    if len(maxima) < k:
        raise InsufficientPeaks(f"{len(maxima)} NMS maxima, need {k}")
    markers = maxima[:k]

    h, w = domain.shape
    heap: list[tuple[float, int, int, int, int]] = []
    seq = 0
    for lab, (y, x) in enumerate(markers, start=1):
        heapq.heappush(heap, (-scores[y, x], seq, y, x, lab))
        seq += 1
    while heap:
        _, _, y, x, lab = heapq.heappop(heap)
        if labels[y, x]:
            continue
        labels[y, x] = lab
        for dy, dx in _NEIGHBOURS_8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and domain[ny, nx] and not labels[ny, nx]:
                heapq.heappush(heap, (-scores[ny, nx], seq, ny, nx, lab))
                seq += 1

    unreached = domain & (labels == 0)
    if unreached.any():
        _attach_nearest(labels, unreached)
    return labels


def _attach_nearest(labels: LabelMap, targets: BitMask) -> None:
    """Assign each target pixel the label of its chessboard-nearest labeled
    pixel via multi-source BFS (seeds enqueued in row-major order)."""
    h, w = labels.shape
    dist = np.full(labels.shape, -1, dtype=np.int32)
    nearest = labels.copy()
    queue = deque()
    for y, x in zip(*np.nonzero(labels)):
        dist[y, x] = 0
        queue.append((int(y), int(x)))
    while queue:
        y, x = queue.popleft()
        for dy, dx in _NEIGHBOURS_8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and dist[ny, nx] < 0:
                dist[ny, nx] = dist[y, x] + 1
                nearest[ny, nx] = nearest[y, x]
                queue.append((ny, nx))
    labels[targets] = nearest[targets]
