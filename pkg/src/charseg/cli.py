"""Command-line interface.

Subcommands:
    synth     render synthetic scenes with exact ground truth
    glyphs    build a glyph template bank from a font directory
    annotate  run the word-to-character annotation pipeline
    eval      compare predicted and ground-truth mask directories

Exit codes: 0 clean, 2 partial failures (some words failed), 1 fatal.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CharsegError
from .glyphs import (
    DEFAULT_TAU,
    GRID_SIZE,
    build_template_bank,
    bundled_font_dir,
    heldout_font_dir,
    parse_categories,
    save_bank,
)
from .pipeline import RunConfig, annotate, evaluate, write_eval_outputs
from .synth import generate_scene, save_scene_bundle


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate synthetic scenes with ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10, help="number of scenes")
    p.add_argument("--fonts", type=Path, default=None, help="font directory (default: bundled held-out fonts)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--canvas", type=int, nargs=2, default=(640, 480), metavar=("W", "H"))
    p.add_argument("--words", type=int, nargs=2, default=(3, 6), metavar=("LO", "HI"))
    p.add_argument("--lengths", type=int, nargs=2, default=(2, 6), metavar=("LO", "HI"))
    p.add_argument("--sizes", type=int, nargs=2, default=(34, 60), metavar=("LO", "HI"))
    p.set_defaults(func=cmd_synth)


def cmd_synth(args) -> int:
    font_dir = args.fonts or heldout_font_dir()
    scenes = []
    for i in range(args.count):
        scenes.append(
            generate_scene(
                args.seed + i,
                font_dir,
                image_id=f"{i:04d}",
                canvas=tuple(args.canvas),
                word_count=tuple(args.words),
                word_length=tuple(args.lengths),
                char_sizes=tuple(args.sizes),
            )
        )
    save_scene_bundle(scenes, args.out)
    total_words = sum(len(s.words) for s in scenes)
    total_chars = sum(len(s.chars) for s in scenes)
    print(f"wrote {len(scenes)} scenes ({total_words} words, {total_chars} chars) to {args.out}")
    return 0


def _add_glyphs(sub):
    p = sub.add_parser("glyphs", help="glyph template bank operations")
    ops = p.add_subparsers(dest="glyphs_cmd", required=True)
    b = ops.add_parser("build", help="build a template bank from fonts")
    b.add_argument("--fonts", type=Path, default=None, help="font directory (default: bundled bank fonts)")
    b.add_argument("--categories", default="alnum", help="'alnum' or literal characters")
    b.add_argument("--grid", type=int, default=GRID_SIZE)
    b.add_argument("--out", type=Path, required=True)
    b.set_defaults(func=cmd_glyphs_build)


def cmd_glyphs_build(args) -> int:
    font_dir = args.fonts or bundled_font_dir()
    bank, report = build_template_bank(
        font_dir, parse_categories(args.categories), args.grid
    )
    save_bank(bank, args.out)
    print(
        f"bank: {len(bank.tables)} categories from {len(report.fonts_used)} fonts -> {args.out}"
    )
    if report.fonts_failed:
        print(f"fonts skipped: {sorted(report.fonts_failed)}")
    if report.categories_dropped:
        print(f"categories dropped (fewer than 2 templates): {report.categories_dropped}")
    return 0


def _add_annotate(sub):
    p = sub.add_parser("annotate", help="refine word annotations into pixel masks")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--images", type=Path, required=True, help="image directory (scene bundle for the oracle backend)")
    p.add_argument("--bank", type=Path, default=None, help="template bank file")
    p.add_argument("--fonts", type=Path, default=None, help="font directory to build a bank on the fly")
    p.add_argument("--backend", choices=["oracle", "remote"], default="oracle")
    p.add_argument("--endpoint", default=None, help="model service URL (remote backend)")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--kpos", type=int, default=5)
    p.add_argument("--kneg", type=int, default=3)
    p.add_argument("--detector-floor", type=float, default=0.3)
    p.add_argument("--no-cgr", action="store_true", help="box-only prompts")
    p.add_argument("--no-pos", action="store_true", help="drop positive points")
    p.add_argument("--no-neg", action="store_true", help="drop negative points")
    p.add_argument("--corruptions", default="", help="comma list: fill-holes,truncate (oracle)")
    p.add_argument("--merge-fraction", type=float, default=0.0, help="oracle detector merge rate")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_annotate)


def cmd_annotate(args) -> int:
    corruptions = tuple(c for c in args.corruptions.split(",") if c)
    config = RunConfig(
        manifest=args.manifest,
        image_dir=args.images,
        out_dir=args.out,
        backend=args.backend,
        endpoint=args.endpoint,
        bank_path=args.bank,
        font_dir=args.fonts if args.fonts else (None if args.bank else bundled_font_dir()),
        tau=args.tau,
        k_pos=args.kpos,
        k_neg=args.kneg,
        detector_floor=args.detector_floor,
        max_in_flight=args.max_in_flight,
        workers=args.workers,
        seed=args.seed,
        use_cgr=not args.no_cgr,
        use_pos=not args.no_pos,
        use_neg=not args.no_neg,
        corruptions=corruptions,
        merge_fraction=args.merge_fraction,
    )
    report = annotate(config)
    counts = report.to_dict()["counts"]
    print(
        f"annotated {report.images} images: {counts['ok']} ok, "
        f"{counts['fallback-used']} fallback, {counts['failed']} failed "
        f"({report.wall_time_s:.1f}s) -> {args.out}"
    )
    return 2 if counts["failed"] else 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="pixel metrics between mask directories")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="directory for report, CSV and figures")
    p.set_defaults(func=cmd_eval)


def cmd_eval(args) -> int:
    report = evaluate(args.pred, args.gt)
    summary = {
        "fg_iou": report.fg_iou,
        "precision": report.precision,
        "recall": report.recall,
        "f_score": report.f_score,
        "images": len(report.per_image),
    }
    print(json.dumps(summary, indent=1))
    if args.out:
        write_eval_outputs(report, args.out)
        print(f"report, per_image.csv and figures -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="charseg",
        description="Character-level scene-text segmentation annotator",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    _add_synth(sub)
    _add_glyphs(sub)
    _add_annotate(sub)
    _add_eval(sub)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CharsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
