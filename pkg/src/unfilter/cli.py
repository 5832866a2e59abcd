"""Command-line entry point: synth, train, unfilter, eval, palette, grid.

Every command exits 0 on success and 1 on any expected failure, printing a
single ``unfilter: error: <message>`` line to stderr (argparse itself exits
2 on usage errors). Each command leaves a config echo beside its outputs so
runs can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import synthesize_dataset
from .errors import UnfilterError
from .evaluate import evaluate_dir, format_confusion
from .filters import FILTER_NAMES
from .image import RgbImage, load_image, save_png
from .palette import dominant_colors, palette_match_delta
from .runconfig import build_train_config, env_seed, parse_config_file
from .training import load_checkpoint, train, unfilter_image

PROFILES = {
    # step counts; everything else follows the reference recipe
    "desk": {"train.steps": 2000},
    "paper": {"train.steps": 120_000},
}


def _echo(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n")


def cmd_synth(args) -> int:
    seed = env_seed() if env_seed() is not None else args.seed
    filters = tuple(args.filters.split(",")) if args.filters else None
    manifest = synthesize_dataset(
        args.src, args.out, size=(args.size[0], args.size[1]), seed=seed, filters=filters
    )
    _echo(
        Path(args.out) / "synth_config.json",
        {
            "command": "synth",
            "src": args.src,
            "out": args.out,
            "size": list(args.size),
            "seed": seed,
            "filters": list(filters) if filters else list(FILTER_NAMES),
        },
    )
    print(f"wrote {len(manifest.entries)} images to {args.out}")
    if manifest.skipped:
        print(f"skipped {len(manifest.skipped)} undecodable files", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    overrides: dict = dict(PROFILES[args.profile])
    overrides["train.dataset_dir"] = args.dataset
    overrides["train.out_dir"] = args.out
    if args.steps is not None:
        overrides["train.steps"] = args.steps
    if args.seed is not None:
        overrides["train.seed"] = args.seed
        overrides["model.seed"] = args.seed
    if args.image_size is not None:
        overrides["model.image_size"] = args.image_size
    config = build_train_config(values, overrides)
    _echo(Path(args.out) / "train_config.json", {"command": "train", **config.to_dict()})
    ckpt = train(config, resume_from=args.resume)
    print(f"finished at step {ckpt.step}; checkpoint: {ckpt.path}")
    return 0


def cmd_unfilter(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    img = load_image(args.input)
    restored, predicted = unfilter_image(ckpt, img)
    save_png(restored, args.output)
    _echo(
        Path(args.output).with_suffix(".json"),
        {
            "command": "unfilter",
            "checkpoint": args.checkpoint,
            "input": args.input,
            "output": args.output,
            "predicted_filter": predicted,
        },
    )
    print(f"predicted filter: {predicted}")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_dir(
        args.checkpoint,
        args.dataset,
        include_originals=not args.no_originals,
        report_path=args.report,
    )
    agg = report.aggregates()
    if agg is None:
        print("no scored images (empty test set)")
    else:
        print(
            f"images: {agg['count']}  ssim: {agg['ssim']:.4f}  psnr: {agg['psnr']:.2f} dB  "
            f"delta_e: {agg['delta_e']:.2f}  feat_dist: {agg['feat_dist']:.4g}"
        )
        if report.accuracy is not None:
            print(f"filter accuracy: {report.accuracy:.4f}")
    if args.confusion:
        print(format_confusion(report))
    return 0


def cmd_palette(args) -> int:
    seed = env_seed() if env_seed() is not None else args.seed
    img = load_image(args.image)
    pal = dominant_colors(img, k=args.k, seed=seed)
    entries = pal.to_json()
    if args.ref:
        ref = dominant_colors(load_image(args.ref), k=args.k, seed=seed)
        for entry, (delta, _) in zip(entries, palette_match_delta(pal, ref)):
            entry["delta_e"] = delta
    payload = {
        "command": "palette",
        "image": args.image,
        "ref": args.ref,
        "k": args.k,
        "seed": seed,
        "palette": entries,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _original_for(path: Path) -> Path | None:
    candidate = path.parent.parent / "original" / path.name
    return candidate if candidate.is_file() else None


def cmd_grid(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    bundle = ckpt.restore_model()
    size = bundle.config.image_size
    rows = []
    meta = []
    for name in args.images:
        path = Path(name)
        filtered = load_image(path).resized(size, size)
        original_path = _original_for(path)
        original = (
            load_image(original_path).resized(size, size) if original_path else filtered
        )
        restored, predicted = unfilter_image(ckpt, filtered, bundle=bundle)
        rows.append(np.concatenate([filtered.pixels, original.pixels, restored.pixels], axis=1))
        meta.append(
            {
                "input": str(path),
                "original": str(original_path) if original_path else None,
                "predicted_filter": predicted,
            }
        )
    grid = RgbImage(np.concatenate(rows, axis=0))
    save_png(grid, args.out)
    _echo(
        Path(args.out).with_suffix(".json"),
        {
            "command": "grid",
            "checkpoint": args.checkpoint,
            "columns": ["filtered", "original", "unfiltered"],
            "rows": meta,
        },
    )
    print(f"wrote {len(rows)}x3 grid to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unfilter",
        description="Synthesize filtered datasets, train the removal model, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"unfilter {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="build a paired filtered/original dataset")
    p.add_argument("src", help="directory of source images")
    p.add_argument("out", help="output dataset directory")
    p.add_argument("--size", nargs=2, type=int, default=(256, 256), metavar=("H", "W"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filters", help="comma-separated subset of filter names")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the filter-removal model")
    p.add_argument("--dataset", required=True, help="synthesized dataset directory")
    p.add_argument("--out", required=True, help="run directory for checkpoints and logs")
    p.add_argument("--config", help="flat key-value config file")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-size", type=int, dest="image_size")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unfilter", help="remove the filter from one image")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_unfilter)

    p = sub.add_parser("eval", help="score a dataset against its originals")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--no-originals", action="store_true",
                   help="exclude originals from the confusion matrix")
    p.add_argument("--confusion", action="store_true", help="print the confusion matrix")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("palette", help="dominant colors of an image")
    p.add_argument("image")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ref", help="reference image to report color distances against")
    p.add_argument("--out", help="write the JSON palette here")
    p.set_defaults(func=cmd_palette)

    p = sub.add_parser("grid", help="filtered | original | unfiltered comparison strip")
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnfilterError as exc:
        print(f"unfilter: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"unfilter: error: missing file: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
