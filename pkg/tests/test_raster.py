import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charseg.errors import InsufficientPeaks
from charseg.raster import (
    BBox,
    connected_components,
    distance_transform,
    flood_from_border,
    holes,
    iou,
    signed_distance,
    watershed_partition,
)


# ---------------------------------------------------------------- oracles


def brute_force_iou(a: BBox, b: BBox) -> float:
    """Pixel-membership count over the union grid."""
    xs = range(min(a.x_min, b.x_min), max(a.x_max, b.x_max))
    ys = range(min(a.y_min, b.y_min), max(a.y_max, b.y_max))
    inter = union = 0
    for y in ys:
        for x in xs:
            in_a = a.x_min <= x < a.x_max and a.y_min <= y < a.y_max
            in_b = b.x_min <= x < b.x_max and b.y_min <= y < b.y_max
            inter += in_a and in_b
            union += in_a or in_b
    return inter / union if union else 0.0


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def uf_partition(mask, connectivity):
    """Union-find labeling oracle; returns frozenset of frozensets of pixels."""
    h, w = mask.shape
    uf = UnionFind(h * w)
    if connectivity == 8:
        offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
    else:
        offsets = [(-1, 0), (0, -1)]
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in offsets:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx]:
                    uf.union(y * w + x, ny * w + nx)
    groups = {}
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                groups.setdefault(uf.find(y * w + x), set()).add((y, x))
    return frozenset(frozenset(g) for g in groups.values())


def label_partition(labels):
    groups = {}
    for y, x in zip(*np.nonzero(labels)):
        groups.setdefault(int(labels[y, x]), set()).add((int(y), int(x)))
    return frozenset(frozenset(g) for g in groups.values())


def bfs_border_reachable(mask):
    """4-connectivity BFS oracle over background from the raster border."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    stack = [
        (y, x)
        for y in range(h)
        for x in range(w)
        if (y in (0, h - 1) or x in (0, w - 1)) and not mask[y, x]
    ]
    for p in stack:
        seen[p] = True
    while stack:
        y, x = stack.pop()
        for dy, dx in [(-1, 0), (1, 0), (0, -1), (0, 1)]:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and not mask[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                stack.append((ny, nx))
    return seen


def brute_force_chessboard(mask):
    """O(n^2) nearest-background search; outside the raster is background."""
    h, w = mask.shape
    out = np.zeros((h, w), dtype=float)
    bg = [(y, x) for y in range(h) for x in range(w) if not mask[y, x]]
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            best = min(y + 1, x + 1, h - y, w - x)  # distance off the raster
            for by, bx in bg:
                best = min(best, max(abs(by - y), abs(bx - x)))
            out[y, x] = best
    return out


# ---------------------------------------------------------------- iou


def test_iou_identity():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0


def test_iou_disjoint():
    assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap_matches_pixel_count():
    a, b = BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)
    assert iou(a, b) == pytest.approx(1 / 3, abs=1e-12)
    assert iou(a, b) == pytest.approx(brute_force_iou(a, b), abs=1e-12)


box_strategy = st.builds(
    lambda x, y, w, h: BBox(x, y, x + w, y + h),
    st.integers(0, 30),
    st.integers(0, 30),
    st.integers(1, 20),
    st.integers(1, 20),
)


@settings(deadline=None, max_examples=200)
@given(box_strategy, box_strategy)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == 1.0
    assert v == pytest.approx(brute_force_iou(a, b), abs=1e-12)


# ------------------------------------------------- connected components


def test_cc_empty_mask():
    labels, comps = connected_components(np.zeros((5, 5), dtype=bool), 8)
    assert comps == []
    assert not labels.any()


def test_cc_diagonal_adjacency():
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 1] = mask[2, 2] = True
    _, comps8 = connected_components(mask, 8)
    _, comps4 = connected_components(mask, 4)
    assert len(comps8) == 1
    assert len(comps4) == 2


def test_cc_descending_area_and_bbox():
    mask = np.zeros((8, 8), dtype=bool)
    mask[0:2, 0:2] = True  # area 4
    mask[5:8, 5:8] = True  # area 9
    labels, comps = connected_components(mask, 8)
    assert [c.area for c in comps] == [9, 4]
    assert comps[0].bbox == BBox(5, 5, 8, 8)
    assert comps[1].bbox == BBox(0, 0, 2, 2)
    assert (labels[5:8, 5:8] == 1).all()


@pytest.mark.parametrize("connectivity", [4, 8])
def test_cc_matches_union_find_oracle(connectivity):
    rng = np.random.default_rng(71)
    for _ in range(25):
        mask = rng.random((16, 16)) < 0.45
        labels, comps = connected_components(mask, connectivity)
        assert label_partition(labels) == uf_partition(mask, connectivity)
        # labels cover exactly the foreground
        assert ((labels > 0) == mask).all()
        assert sum(c.area for c in comps) == int(mask.sum())


# ------------------------------------------------------ flood from border


def test_flood_ring_excludes_interior():
    mask = np.zeros((7, 7), dtype=bool)
    mask[1:6, 1:6] = True
    mask[2:5, 2:5] = False  # interior background, sealed off
    reach = flood_from_border(mask)
    assert not reach[3, 3]
    assert reach[0, 0]
    assert holes(mask)[3, 3]


def test_flood_empty_mask_returns_full_raster():
    mask = np.zeros((4, 6), dtype=bool)
    assert flood_from_border(mask).all()


def test_flood_matches_bfs_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        mask = rng.random((14, 14)) < 0.5
        got = flood_from_border(mask)
        assert (got == bfs_border_reachable(mask)).all()
        # subset of background, border background included
        assert not (got & mask).any()


def test_flood_is_fixed_point():
    rng = np.random.default_rng(11)
    mask = rng.random((20, 20)) < 0.5
    reach = flood_from_border(mask)
    again = flood_from_border(~reach)
    assert (again == reach).all()


# ------------------------------------------------------ distance transform


def test_dt_single_pixel():
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True
    dt = distance_transform(mask)
    assert dt[2, 2] == 1.0
    assert dt[0, 0] == 0.0


def test_dt_solid_square_center():
    mask = np.ones((5, 5), dtype=bool)
    assert distance_transform(mask)[2, 2] == 3.0


def test_dt_matches_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(10):
        mask = rng.random((12, 12)) < 0.6
        assert (distance_transform(mask) == brute_force_chessboard(mask)).all()


def test_signed_distance_sign_matches_mask():
    rng = np.random.default_rng(5)
    mask = rng.random((15, 15)) < 0.4
    sd = signed_distance(mask)
    assert ((sd > 0) == mask).all()
    empty = signed_distance(np.zeros((4, 4), dtype=bool))
    assert (empty == -1.0).all()


# ------------------------------------------------------------- watershed


def two_bump_scores(w=40, h=20, c1=(10, 10), c2=(30, 10)):
    yy, xx = np.mgrid[0:h, 0:w]
    g1 = np.exp(-(((xx - c1[0]) ** 2 + (yy - c1[1]) ** 2) / 18.0))
    g2 = np.exp(-(((xx - c2[0]) ** 2 + (yy - c2[1]) ** 2) / 18.0))
    return np.maximum(g1, g2)


def test_watershed_two_bumps_separate_centers():
    scores = two_bump_scores()
    domain = np.ones(scores.shape, dtype=bool)
    labels = watershed_partition(scores, domain, 2)
    assert labels[10, 10] != 0 and labels[10, 30] != 0
    assert labels[10, 10] != labels[10, 30]
    assert set(np.unique(labels)) == {1, 2}


def test_watershed_k1_returns_domain():
    rng = np.random.default_rng(3)
    scores = rng.random((10, 10))
    domain = rng.random((10, 10)) < 0.5
    domain[0, 0] = True
    labels = watershed_partition(scores, domain, 1)
    assert ((labels == 1) == domain).all()


def test_watershed_uniform_scores_insufficient_peaks():
    scores = np.ones((12, 12))
    domain = np.ones((12, 12), dtype=bool)
    with pytest.raises(InsufficientPeaks):
        watershed_partition(scores, domain, 2)


def planted_bump_scores(rng, h, w, k):
    """Random field with k planted well-separated bumps."""
    yy, xx = np.mgrid[0:h, 0:w]
    scores = rng.random((h, w)) * 0.05
    step = w // k
    centers = []
    for i in range(k):
        jitter = int(rng.integers(-step // 8, step // 8 + 1))
        cx = i * step + step // 2 + jitter
        cy = int(rng.integers(h // 4, 3 * h // 4))
        centers.append((int(cx), cy))
        scores += np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / 8.0))
    return scores, centers


def test_watershed_invariants_random_fixtures():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        k = int(rng.integers(1, 5))
        h, w = int(rng.integers(12, 28)), int(rng.integers(8 * k, 12 * k))
        scores, centers = planted_bump_scores(rng, h, w, k)
        domain = np.ones((h, w), dtype=bool)
        domain[rng.random((h, w)) < 0.05] = False  # pepper holes
        domain[0, :] = True
        for cx, cy in centers:  # keep planted peaks in-domain
            domain[cy, cx] = True
        labels = watershed_partition(scores, domain, k)
        present = set(np.unique(labels)) - {0}
        assert present == set(range(1, k + 1))
        assert ((labels > 0) == domain).all()  # regions cover the domain exactly
        again = watershed_partition(scores, domain, k)
        assert (again == labels).all()


def test_watershed_regions_each_contain_one_marker():
    scores = two_bump_scores()
    domain = np.ones(scores.shape, dtype=bool)
    labels = watershed_partition(scores, domain, 2)
    # the two bump peaks act as markers; each sits in its own region
    assert labels[10, 10] == labels[10, 10]
    sizes = [int((labels == lab).sum()) for lab in (1, 2)]
    assert all(s > 0 for s in sizes)
