"""Pixel-level segmentation metrics: fgIoU, precision, recall, F-score.

Tallies combine associatively, and the global report sums per-image
tallies before deriving metrics (the benchmark convention), so metrics
are invariant under re-tiling of the rasters. Degenerate denominators:
an empty prediction against an empty truth is perfect (1.0); empty
against non-empty (or vice versa) is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, ShapeMismatch
from .raster import BitMask


@dataclass(frozen=True)
class PixelTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "PixelTally") -> "PixelTally":
        return PixelTally(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def fg_iou(self) -> float:
        denom = self.tp + self.fp + self.fn
        return self.tp / denom if denom else 1.0

    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self.fn == 0 else 0.0
        return self.tp / (self.tp + self.fp)

    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self.fp == 0 else 0.0
        return self.tp / (self.tp + self.fn)

    def f_score(self) -> float:
        if self.tp + self.fp + self.fn == 0:
            return 1.0
        p, r = self.precision(), self.recall()
        return 2 * p * r / (p + r) if p + r else 0.0


def tally(pred: BitMask, gt: BitMask) -> PixelTally:
    """Confusion counts over all pixels; foreground is the positive class."""
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    tp = int((pred & gt).sum())
    fp = int((pred & ~gt).sum())
    fn = int((~pred & gt).sum())
    tn = int((~pred & ~gt).sum())
    return PixelTally(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass
class EvalReport:
    per_image: dict[str, PixelTally] = field(default_factory=dict)
    global_tally: PixelTally = field(default_factory=PixelTally)

    @property
    def fg_iou(self) -> float:
        return self.global_tally.fg_iou()

    @property
    def precision(self) -> float:
        return self.global_tally.precision()

    @property
    def recall(self) -> float:
        return self.global_tally.recall()

    @property
    def f_score(self) -> float:
        return self.global_tally.f_score()

    def to_dict(self) -> dict:
        return {
            "fg_iou": self.fg_iou,
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
            "pixels": {
                "tp": self.global_tally.tp,
                "fp": self.global_tally.fp,
                "fn": self.global_tally.fn,
                "tn": self.global_tally.tn,
            },
            "per_image": {
                image_id: {
                    "tp": t.tp,
                    "fp": t.fp,
                    "fn": t.fn,
                    "tn": t.tn,
                    "fg_iou": t.fg_iou(),
                    "f_score": t.f_score(),
                }
                for image_id, t in sorted(self.per_image.items())
            },
        }


def report(tallies: dict[str, PixelTally]) -> EvalReport:
    """Aggregate per-image tallies into global metrics (summed tallies)."""
    if not tallies:
        raise EmptyInput("no tallies to aggregate")
    total = PixelTally()
    for t in tallies.values():
        total = total + t
    return EvalReport(per_image=dict(tallies), global_tally=total)
