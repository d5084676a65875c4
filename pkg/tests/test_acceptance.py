"""Acceptance suite: every release criterion at its stated tolerance.

Each test computes its criterion and prints one [ACCEPTANCE] pass/fail
line. The synthetic corpus is rendered with the held-out fonts (never in
the template bank), so the glyph-consensus properties are measured on
unseen typefaces.
"""

import itertools
import time

import numpy as np
import pytest
from PIL import ImageFont

from charseg.annotations import CharAnnotation
from charseg.cgr import prompts_for_char
from charseg.glyphs import (
    ALNUM,
    bundled_font_dir,
    consensus_mask,
    heldout_font_dir,
    list_font_files,
)
from charseg.metrics import PixelTally, tally
from charseg.oracle import (
    OracleDetector,
    OracleRecognizer,
    OracleSegmenter,
    random_merge_plan,
)
from charseg.pipeline import RunConfig, annotate, evaluate
from charseg.raster import (
    BBox,
    connected_components,
    holes,
    iou,
    watershed_partition,
)
from charseg.synth import _render_char, generate_scene, save_scene_bundle
from charseg import cbr

CORPUS_SEEDS = range(100, 150)
HELD_OUT_SIZES = [34, 38, 44, 50, 56, 60]


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_corpus")
    scenes = [
        generate_scene(seed, heldout_font_dir(), image_id=f"{i:04d}")
        for i, seed in enumerate(CORPUS_SEEDS)
    ]
    save_scene_bundle(scenes, out)
    return out


def _config(corpus_dir, out_dir, **kw):
    base = dict(
        manifest=corpus_dir / "manifest.json",
        image_dir=corpus_dir,
        out_dir=out_dir,
        backend="oracle",
        font_dir=bundled_font_dir(),
        workers=1,
    )
    base.update(kw)
    return RunConfig(**base)


def test_e2e_oracle_closure(corpus, tmp_path):
    started = time.time()
    report = annotate(_config(corpus, tmp_path / "run"))
    elapsed = time.time() - started
    ev = evaluate(tmp_path / "run" / "masks", corpus / "gt")
    ok = ev.fg_iou == 1.0 and elapsed < 60.0
    _report(
        "e2e-oracle-closure",
        ok,
        f"50 scenes, fgIoU={ev.fg_iou:.6f} (need exactly 1.0), "
        f"runtime={elapsed:.1f}s (need <60), failed={report.count('failed')}",
    )


def test_corrupted_oracle_repair(corpus, tmp_path):
    report = annotate(
        _config(corpus, tmp_path / "run", corruptions=("fill-holes", "truncate"))
    )
    ev = evaluate(tmp_path / "run" / "masks", corpus / "gt")
    failed = report.count("failed")
    ok = ev.fg_iou >= 0.95 and ev.f_score >= 0.97 and failed == 0
    _report(
        "corrupted-oracle-repair",
        ok,
        f"fgIoU={ev.fg_iou:.4f} (need >=0.95), F={ev.f_score:.4f} (need >=0.97), "
        f"failed words={failed} (need 0)",
    )


def test_prompt_granularity_ablation(corpus, tmp_path):
    settings = [
        ("box-only", dict(use_cgr=False)),
        ("+pos", dict(use_neg=False)),
        ("+neg", dict(use_pos=False)),
        ("full", dict()),
    ]
    scores = []
    for name, flags in settings:
        annotate(
            _config(
                corpus,
                tmp_path / f"run_{name}",
                corruptions=("fill-holes", "truncate"),
                **flags,
            )
        )
        ev = evaluate(tmp_path / f"run_{name}" / "masks", corpus / "gt")
        scores.append((name, ev.fg_iou))
    values = [v for _, v in scores]
    adjacent_ok = all(a <= b for a, b in zip(values, values[1:]))
    strict = values[-1] > values[0]
    delta = 100 * (values[-1] - values[0])
    ok = adjacent_ok and strict and delta >= 5.0
    chain = " -> ".join(f"{n}={v:.4f}" for n, v in scores)
    _report(
        "prompt-granularity-ablation",
        ok,
        f"{chain}; full-box delta={delta:.1f} points (need >=5, each step non-decreasing)",
    )


def test_cbr_recovery():
    n_target = 200
    words_total = exact = chars_total = chars_ok = 0
    scene_idx = 0
    while words_total < n_target:
        scene = generate_scene(
            2000 + scene_idx,
            heldout_font_dir(),
            word_count=(4, 6),
            word_length=(2, 6),
        )
        scene_idx += 1
        scenes = {scene.image_id: scene}
        merges = random_merge_plan(scenes, 0.3, seed=scene_idx)
        seg = OracleSegmenter(scenes)
        det = OracleDetector(scenes, merges=merges)
        rec = OracleRecognizer(scenes)
        for wi, word in enumerate(scene.words):
            if words_total >= n_target:
                break
            words_total += 1
            try:
                result = cbr.refine_word(
                    scene.image_id, scene.image, word, wi, seg, det, rec
                )
            except Exception:
                continue
            gt = scene.chars_of_word(wi)
            if len(result.chars) == len(word.text):
                exact += 1
            for char, truth in zip(result.chars, gt):
                chars_total += 1
                if iou(char.bbox, truth.bbox) >= 0.7:
                    chars_ok += 1
    word_rate = exact / words_total
    char_rate = chars_ok / chars_total
    ok = word_rate >= 0.98 and char_rate >= 0.95
    _report(
        "cbr-recovery",
        ok,
        f"{words_total} words with 30% forced merges: exact-count rate "
        f"{100 * word_rate:.1f}% (need >=98), char IoU>=0.7 rate "
        f"{100 * char_rate:.2f}% (need >=95)",
    )


def test_glyph_topology_and_hit_rates(bundled_bank):
    must_hole = ["A", "D", "O", "P", "Q", "R", "a", "b", "d", "g", "o", "p", "q",
                 "0", "4", "6", "8", "9"]
    must_empty = ["C", "E", "F", "I", "L", "T", "c", "l", "t", "1", "7"]
    n_fonts = len(list_font_files(bundled_font_dir()))
    topo_bad = [c for c in must_hole if not consensus_mask(bundled_bank.table(c), "hole", 0.6).any()]
    topo_bad += [c for c in must_empty if consensus_mask(bundled_bank.table(c), "hole", 0.6).any()]

    pos_total = pos_hit = neg_total = neg_hit = 0
    for font_path in list_font_files(heldout_font_dir()):
        for size in HELD_OUT_SIZES:
            font = ImageFont.truetype(str(font_path), size)
            for cat in ALNUM:
                rendered = _render_char(font, cat)
                if rendered is None:
                    continue
                ink, _ = rendered
                char = CharAnnotation(
                    bbox=BBox(0, 0, ink.shape[1], ink.shape[0]),
                    category=cat,
                    word_index=0,
                    char_index=0,
                )
                prompt_set = prompts_for_char(char, bundled_bank, tau=0.6)
                for p in prompt_set.positives:
                    pos_total += 1
                    pos_hit += bool(ink[p.y, p.x])
                for p in prompt_set.negatives:
                    neg_total += 1
                    neg_hit += not ink[p.y, p.x]
    ok = (
        n_fonts >= 10
        and not topo_bad
        and pos_hit == pos_total
        and neg_hit == neg_total
        and pos_total > 0
        and neg_total > 0
    )
    _report(
        "glyph-topology-and-hit-rates",
        ok,
        f"{n_fonts} bundled fonts (need >=10); topology violations={topo_bad}; "
        f"held-out ink hit {pos_hit}/{pos_total}, background hit {neg_hit}/{neg_total} "
        f"(both need 100%)",
    )


def _brute_tally(pred, gt):
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            p, g = bool(pred[y, x]), bool(gt[y, x])
            tp += p and g
            fp += p and not g
            fn += (not p) and g
            tn += (not p) and (not g)
    return PixelTally(tp, fp, fn, tn)


class _UnionFind:
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


def _uf_partition(mask, connectivity):
    h, w = mask.shape
    uf = _UnionFind(h * w)
    offsets = (
        [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
        if connectivity == 8
        else [(-1, 0), (0, -1)]
    )
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


def test_oracle_equivalences():
    rng = np.random.default_rng(606)

    # metrics vs brute-force tally, 1000 random 16x16 pairs, exact
    metric_bad = 0
    for _ in range(1000):
        pred = rng.random((16, 16)) < rng.uniform(0.2, 0.8)
        gt = rng.random((16, 16)) < rng.uniform(0.2, 0.8)
        if tally(pred, gt) != _brute_tally(pred, gt):
            metric_bad += 1

    # Hungarian vs permutation brute force, 500 random matrices, n <= 6
    from scipy.optimize import linear_sum_assignment

    hungarian_bad = 0
    for _ in range(500):
        n = int(rng.integers(2, 7))
        matrix = rng.random((n, n))
        rows, cols = linear_sum_assignment(matrix)
        got = matrix[rows, cols].sum()
        best = min(
            sum(matrix[i, perm[i]] for i in range(n))
            for perm in itertools.permutations(range(n))
        )
        if abs(got - best) > 1e-12:
            hungarian_bad += 1

    # connected components vs union-find oracle, random masks up to 32x32,
    # all pixel pairs verified through partition equality
    cc_bad = 0
    for connectivity in (4, 8):
        for _ in range(30):
            h = int(rng.integers(1, 33))
            w = int(rng.integers(1, 33))
            mask = rng.random((h, w)) < rng.uniform(0.25, 0.75)
            labels, _ = connected_components(mask, connectivity)
            groups = {}
            for y, x in zip(*np.nonzero(labels)):
                groups.setdefault(int(labels[y, x]), set()).add((int(y), int(x)))
            got = frozenset(frozenset(g) for g in groups.values())
            if got != _uf_partition(mask, connectivity):
                cc_bad += 1

    # watershed invariants on 200 planted-peak fixtures
    ws_bad = 0
    for _ in range(200):
        k = int(rng.integers(1, 5))
        h = int(rng.integers(12, 28))
        w = int(rng.integers(8 * k, 12 * k))
        yy, xx = np.mgrid[0:h, 0:w]
        scores = rng.random((h, w)) * 0.05
        step = w // k
        centers = []
        for i in range(k):
            cx = i * step + step // 2 + int(rng.integers(-step // 8, step // 8 + 1))
            cy = int(rng.integers(h // 4, 3 * h // 4))
            centers.append((cx, cy))
            scores += np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / 8.0))
        domain = np.ones((h, w), dtype=bool)
        domain[rng.random((h, w)) < 0.05] = False
        for cx, cy in centers:
            domain[cy, cx] = True
        labels = watershed_partition(scores, domain, k)
        present = set(np.unique(labels)) - {0}
        if present != set(range(1, k + 1)) or not ((labels > 0) == domain).all():
            ws_bad += 1

    ok = metric_bad == 0 and hungarian_bad == 0 and cc_bad == 0 and ws_bad == 0
    _report(
        "oracle-equivalences",
        ok,
        f"metrics mismatches={metric_bad}/1000, hungarian mismatches={hungarian_bad}/500, "
        f"cc partition mismatches={cc_bad}/60, watershed invariant violations={ws_bad}/200 "
        f"(all need 0)",
    )


def test_determinism_byte_identical(corpus, tmp_path):
    for name in ("first", "second"):
        annotate(
            _config(
                corpus,
                tmp_path / name,
                corruptions=("fill-holes", "truncate"),
                seed=3,
            )
        )
    masks = sorted((tmp_path / "first" / "masks").glob("*.png"))
    differing = [
        m.name
        for m in masks
        if m.read_bytes() != (tmp_path / "second" / "masks" / m.name).read_bytes()
    ]
    ok = not differing and len(masks) == len(list(CORPUS_SEEDS))
    _report(
        "determinism",
        ok,
        f"two runs, identical config+seed: {len(masks)} masks, "
        f"differing={differing or 'none'}",
    )
