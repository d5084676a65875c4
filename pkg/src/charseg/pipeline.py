"""Orchestration: annotate a manifest end to end, evaluate mask dirs.

The annotate flow per image: every word is refined to character boxes
(CBR), each character gets glyph-consensus point prompts (CGR), the
segmenter is queried once per character, and the responses are OR-composed
into the image mask. Failures are isolated per word: a failed word is
logged in the run report and never aborts the run.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import cbr
from .annotations import (
    CharAnnotation,
    export_masks,
    load_manifest,
    load_mask_png,
)
from .backends import SegmentRequest
from .cgr import K_NEG_DEFAULT, K_POS_DEFAULT, prompts_for_char
from .errors import (
    BackendUnavailable,
    ConfigError,
    MissingPair,
    ProtocolError,
    RefinementFailed,
    UnknownCategory,
)
from .glyphs import DEFAULT_TAU, TemplateBank, build_template_bank, load_bank
from .metrics import EvalReport, report as metrics_report, tally
from .oracle import CorruptionConfig, oracle_backends, random_merge_plan
from .raster import BitMask
from .remote import RemoteBackend
from .synth import load_scene_bundle

STATUS_OK = "ok"
STATUS_FALLBACK = "fallback-used"
STATUS_FAILED = "failed"


@dataclass
class RunConfig:
    manifest: Path
    image_dir: Path
    out_dir: Path
    backend: str = "oracle"
    endpoint: str | None = None
    bank_path: Path | None = None
    font_dir: Path | None = None
    tau: float = DEFAULT_TAU
    k_pos: int = K_POS_DEFAULT
    k_neg: int = K_NEG_DEFAULT
    detector_floor: float = cbr.DETECTOR_CONFIDENCE_FLOOR
    max_in_flight: int = 4
    workers: int = 1
    seed: int = 0
    use_cgr: bool = True
    use_pos: bool = True
    use_neg: bool = True
    corruptions: tuple[str, ...] = ()
    merge_fraction: float = 0.0

    def validate(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.backend not in ("oracle", "remote"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigError("remote backend needs --endpoint")
        if self.use_cgr and not (self.bank_path or self.font_dir):
            raise ConfigError("need a template bank (or font dir) unless CGR is off")
        unknown = set(self.corruptions) - {"fill-holes", "truncate"}
        if unknown:
            raise ConfigError(f"unknown corruptions {sorted(unknown)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def echo(self) -> dict:
        return {
            "manifest": str(self.manifest),
            "image_dir": str(self.image_dir),
            "out_dir": str(self.out_dir),
            "backend": self.backend,
            "endpoint": self.endpoint,
            "bank_path": str(self.bank_path) if self.bank_path else None,
            "font_dir": str(self.font_dir) if self.font_dir else None,
            "tau": self.tau,
            "k_pos": self.k_pos,
            "k_neg": self.k_neg,
            "detector_floor": self.detector_floor,
            "max_in_flight": self.max_in_flight,
            "workers": self.workers,
            "seed": self.seed,
            "use_cgr": self.use_cgr,
            "use_pos": self.use_pos,
            "use_neg": self.use_neg,
            "corruptions": list(self.corruptions),
            "merge_fraction": self.merge_fraction,
        }


@dataclass
class WordOutcome:
    image_id: str
    word_index: int
    status: str
    reason: str = ""


@dataclass
class RunReport:
    words: list[WordOutcome] = field(default_factory=list)
    images: int = 0
    wall_time_s: float = 0.0
    config: dict = field(default_factory=dict)

    def count(self, status: str) -> int:
        return sum(1 for w in self.words if w.status == status)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "images": self.images,
            "wall_time_s": self.wall_time_s,
            "counts": {
                STATUS_OK: self.count(STATUS_OK),
                STATUS_FALLBACK: self.count(STATUS_FALLBACK),
                STATUS_FAILED: self.count(STATUS_FAILED),
            },
            "words": [
                {
                    "image_id": w.image_id,
                    "word_index": w.word_index,
                    "status": w.status,
                    "reason": w.reason,
                }
                for w in self.words
            ],
        }


class _Guarded:
    """Serializes backend calls to the backend's declared capacity."""

    def __init__(self, backend, max_in_flight: int):
        self._backend = backend
        cap = getattr(backend, "max_in_flight", 0) or max_in_flight
        self._gate = threading.Semaphore(cap) if cap > 0 else None

    def __getattr__(self, name):
        attr = getattr(self._backend, name)
        if not callable(attr) or self._gate is None:
            return attr
        gate = self._gate

        def call(*args, **kwargs):
            with gate:
                return attr(*args, **kwargs)

        return call


def _load_backends(config: RunConfig):
    if config.backend == "oracle":
        scenes = load_scene_bundle(config.image_dir)
        corruption = CorruptionConfig(
            fill_holes="fill-holes" in config.corruptions,
            truncate="truncate" in config.corruptions,
        )
        merges = (
            random_merge_plan(scenes, config.merge_fraction, config.seed)
            if config.merge_fraction > 0
            else None
        )
        return oracle_backends(scenes, corruption, merges)
    client = RemoteBackend(config.endpoint, max_in_flight=config.max_in_flight)
    guarded = _Guarded(client, config.max_in_flight)

    class RemoteSet:
        segmenter = guarded
        detector = guarded
        recognizer = guarded

    return RemoteSet()


def _load_bank(config: RunConfig) -> TemplateBank | None:
    if not config.use_cgr:
        return None
    if config.bank_path:
        return load_bank(config.bank_path)
    bank, _ = build_template_bank(config.font_dir)
    return bank


def _char_prompts(
    char: CharAnnotation, bank: TemplateBank | None, config: RunConfig
) -> tuple[tuple, tuple]:
    """Point prompts for one character, honoring ablation switches.

    Raises UnknownCategory when the bank lacks the category.
    """
    if bank is None:
        return (), ()
    prompt_set = prompts_for_char(
        char, bank, tau=config.tau, k_pos=config.k_pos, k_neg=config.k_neg
    )
    positives = prompt_set.positives if config.use_pos else ()
    negatives = prompt_set.negatives if config.use_neg else ()
    return positives, negatives


def _annotate_image(record, image: np.ndarray, backends, bank, config: RunConfig):
    mask = np.zeros((record.height, record.width), dtype=bool)
    chars_out: list[CharAnnotation] = []
    outcomes: list[WordOutcome] = []
    for word_index, word in enumerate(record.words):
        try:
            result = cbr.refine_word(
                record.id,
                image,
                word,
                word_index,
                backends.segmenter,
                getattr(backends, "detector", None),
                getattr(backends, "recognizer", None),
                confidence_floor=config.detector_floor,
            )
            status = STATUS_FALLBACK if result.fallback_used else STATUS_OK
            word_prompts = []
            try:
                for char in result.chars:
                    word_prompts.append(_char_prompts(char, bank, config))
            except UnknownCategory:
                # no glyph table: the whole word degrades to box prompts
                word_prompts = [((), ()) for _ in result.chars]
                status = STATUS_FALLBACK
            for char, (positives, negatives) in zip(result.chars, word_prompts):
                request = SegmentRequest(
                    image_id=record.id,
                    image=image,
                    box=char.bbox,
                    positives=tuple(positives),
                    negatives=tuple(negatives),
                )
                response = backends.segmenter.segment(request)
                b = char.bbox
                mask[b.y_min : b.y_max, b.x_min : b.x_max] |= response.mask
                chars_out.append(char)
            outcomes.append(WordOutcome(record.id, word_index, status))
        except (RefinementFailed, BackendUnavailable, ProtocolError) as exc:
            outcomes.append(
                WordOutcome(record.id, word_index, STATUS_FAILED, reason=str(exc))
            )
    return mask, chars_out, outcomes


def annotate(config: RunConfig) -> RunReport:
    """Run the full annotate -> export flow; returns the run report."""
    config.validate()
    started = time.time()
    manifest = load_manifest(config.manifest)
    backends = _load_backends(config)
    bank = _load_bank(config)

    results: dict[str, tuple[BitMask, list[CharAnnotation]]] = {}
    report = RunReport(config=config.echo(), images=len(manifest.images))

    def process(record):
        path = Path(config.image_dir) / record.file
        with Image.open(path) as img:
            image = np.asarray(img.convert("RGB"))
        return record.id, _annotate_image(record, image, backends, bank, config)

    if config.workers == 1:
        processed = [process(rec) for rec in manifest.images]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            processed = list(pool.map(process, manifest.images))

    for image_id, (mask, chars, outcomes) in processed:
        results[image_id] = (mask, chars)
        report.words.extend(outcomes)

    export_masks(results, config.out_dir)
    report.wall_time_s = time.time() - started
    out_dir = Path(config.out_dir)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=1))
    _write_word_csv(report, out_dir / "words.csv")
    from .figures import word_status_figure

    word_status_figure(report.to_dict()["counts"], out_dir / "figures")
    return report


def _write_word_csv(report: RunReport, path: Path) -> None:
    import csv

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["image_id", "word_index", "status", "reason"])
        for w in report.words:
            writer.writerow([w.image_id, w.word_index, w.status, w.reason])


def _mask_files(directory: Path) -> dict[str, Path]:
    directory = Path(directory)
    if (directory / "masks").is_dir():
        directory = directory / "masks"
    return {p.stem: p for p in sorted(directory.glob("*.png"))}


def evaluate(pred_dir: str | Path, gt_dir: str | Path) -> EvalReport:
    """Pixel metrics between two mask directories with matching ids."""
    pred = _mask_files(Path(pred_dir))
    gt = _mask_files(Path(gt_dir))
    missing = sorted(set(pred) ^ set(gt))
    if missing:
        raise MissingPair(f"ids not present on both sides: {', '.join(missing)}")
    if not pred:
        raise MissingPair("no mask pairs found")
    tallies = {}
    for image_id in sorted(pred):
        tallies[image_id] = tally(load_mask_png(pred[image_id]), load_mask_png(gt[image_id]))
    return metrics_report(tallies)


def write_eval_outputs(report: EvalReport, out_dir: str | Path) -> None:
    """Persist an evaluation: JSON report, per-image CSV, figures."""
    import csv

    from .figures import eval_figures

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=1))
    with open(out_dir / "per_image.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["image_id", "tp", "fp", "fn", "tn", "fg_iou", "f_score"])
        for image_id, t in sorted(report.per_image.items()):
            writer.writerow(
                [image_id, t.tp, t.fp, t.fn, t.tn, f"{t.fg_iou():.6f}", f"{t.f_score():.6f}"]
            )
    eval_figures(report, out_dir / "figures")
