import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charseg.errors import EmptyInput, ShapeMismatch
from charseg.metrics import PixelTally, report, tally


def brute_force_tally(pred, gt):
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            p, g = bool(pred[y, x]), bool(gt[y, x])
            tp += p and g
            fp += p and not g
            fn += (not p) and g
            tn += (not p) and (not g)
    return PixelTally(tp, fp, fn, tn)


def test_tally_identity():
    rng = np.random.default_rng(3)
    mask = rng.random((10, 10)) < 0.5
    t = tally(mask, mask)
    assert t.fp == 0 and t.fn == 0
    assert t.tp == int(mask.sum())


def test_tally_empty_prediction():
    gt = np.zeros((8, 8), dtype=bool)
    gt[2:5, 2:5] = True
    t = tally(np.zeros_like(gt), gt)
    assert t.tp == 0 and t.fn == 9 and t.fp == 0


def test_tally_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        tally(np.zeros((4, 4), dtype=bool), np.zeros((4, 5), dtype=bool))


def test_tally_matches_brute_force_sample():
    rng = np.random.default_rng(17)
    for _ in range(50):
        pred = rng.random((16, 16)) < 0.5
        gt = rng.random((16, 16)) < 0.5
        assert tally(pred, gt) == brute_force_tally(pred, gt)


def test_report_identity_is_perfect():
    mask = np.zeros((6, 6), dtype=bool)
    mask[1:4, 1:4] = True
    rep = report({"a": tally(mask, mask)})
    assert rep.fg_iou == 1.0 and rep.f_score == 1.0


def test_report_arithmetic():
    rep = report({"a": PixelTally(tp=50, fp=25, fn=25, tn=0)})
    assert rep.fg_iou == pytest.approx(0.5)
    assert rep.precision == pytest.approx(2 / 3)
    assert rep.recall == pytest.approx(2 / 3)
    assert rep.f_score == pytest.approx(2 / 3, abs=1e-4)


def test_report_global_aggregation():
    tallies = {
        "a": PixelTally(tp=1, fp=0, fn=1, tn=0),
        "b": PixelTally(tp=3, fp=2, fn=0, tn=0),
    }
    rep = report(tallies)
    assert rep.fg_iou == pytest.approx(4 / 7)


def test_report_empty_input():
    with pytest.raises(EmptyInput):
        report({})


def test_degenerate_conventions():
    both_empty = PixelTally(tp=0, fp=0, fn=0, tn=100)
    assert both_empty.fg_iou() == 1.0
    assert both_empty.precision() == 1.0
    assert both_empty.recall() == 1.0
    assert both_empty.f_score() == 1.0
    pred_only = PixelTally(tp=0, fp=5, fn=0, tn=95)
    assert pred_only.recall() == 0.0
    gt_only = PixelTally(tp=0, fp=0, fn=5, tn=95)
    assert gt_only.precision() == 0.0
    assert gt_only.fg_iou() == 0.0


@settings(deadline=None, max_examples=200)
@given(
    st.integers(1, 1000), st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000)
)
def test_fg_iou_below_f_score(tp, fp, fn, tn):
    t = PixelTally(tp, fp, fn, tn)
    # F = 2*IoU/(1+IoU) >= IoU whenever tp > 0
    assert t.fg_iou() <= t.f_score() + 1e-12
    assert t.f_score() == pytest.approx(
        2 * t.fg_iou() / (1 + t.fg_iou()), abs=1e-12
    )


def test_metrics_invariant_under_tiling():
    rng = np.random.default_rng(29)
    pred = rng.random((32, 48)) < 0.4
    gt = rng.random((32, 48)) < 0.4
    whole = report({"whole": tally(pred, gt)})
    tiles = {}
    for i, (ys, xs) in enumerate(
        [(slice(0, 16), slice(0, 24)), (slice(0, 16), slice(24, 48)),
         (slice(16, 32), slice(0, 24)), (slice(16, 32), slice(24, 48))]
    ):
        tiles[f"t{i}"] = tally(pred[ys, xs], gt[ys, xs])
    tiled = report(tiles)
    assert tiled.global_tally == whole.global_tally
    assert tiled.fg_iou == whole.fg_iou
    assert tiled.f_score == whole.f_score


def test_report_dict_round_trip_fields():
    rep = report({"a": PixelTally(tp=10, fp=2, fn=3, tn=85)})
    d = rep.to_dict()
    assert set(d) == {"fg_iou", "precision", "recall", "f_score", "pixels", "per_image"}
    assert d["pixels"]["tp"] == 10
    assert "a" in d["per_image"]
