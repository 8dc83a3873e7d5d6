"""Command-line entry point.

Subcommands wire config files to the generate/train/eval/infer/ablate
workflows. Every run-config key is also available as ``--key value``;
command-line values override the config file, which overrides defaults.

Exit codes: 0 success, 2 config error, 3 data error, 4 format error,
5 numeric abort; unexpected failures return 1.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import (
    KEY_SPECS,
    eval_config_from,
    generator_config_from,
    merge_run_config,
    model_config_from,
    parse_config_file,
    run_config_to_items,
    train_config_from,
)
from .dataset import load_image, read_manifest
from .errors import ConfigError, DataError, FormatError, HipgrafError, NumericError
from .experiments import ablation_csv, ablation_run, write_metrics_csv
from .metrics import METRICS_CSV_HEADER, decode_landmarks, write_overlay
from .nets.model import build_model
from .phantom import generate_dataset
from .training import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FORMAT = 4
EXIT_NUMERIC = 5


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config file of 'key = value' lines")
    for key, (_, default, help_text) in KEY_SPECS.items():
        parser.add_argument(f"--{key}", metavar="V", help=f"{help_text} (default {default})")


def _collect_config(args: argparse.Namespace) -> dict:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {}
    for key in KEY_SPECS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            overrides[key] = value
    return merge_run_config(file_values, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hipgraf", description="Hip landmark detection on synthetic phantoms")
    sub = parser.add_subparsers(dest="command", required=True)

    p_generate = sub.add_parser("generate", help="write a synthetic phantom dataset")
    p_generate.add_argument("--out", required=True, help="output directory")
    _add_config_options(p_generate)

    p_train = sub.add_parser("train", help="train a model on a generated dataset")
    p_train.add_argument("--data", required=True, help="manifest CSV path")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--log", help="loss log CSV path (default: <out>.losses.csv)")
    _add_config_options(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="manifest CSV path")
    p_eval.add_argument("--out", help="metrics CSV path (default: print to stdout)")
    p_eval.add_argument("--overlay-dir", help="write per-sample overlay PGMs here")
    _add_config_options(p_eval)

    p_infer = sub.add_parser("infer", help="detect landmarks on one image")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--image", required=True, help=".tgt or .pgm image file")
    p_infer.add_argument("--overlay", help="write an overlay PGM here")
    _add_config_options(p_infer)

    p_ablate = sub.add_parser("ablate", help="cross-validate the four model variants")
    p_ablate.add_argument("--data", required=True, help="manifest CSV path")
    p_ablate.add_argument("--out", required=True, help="comparison CSV path")
    _add_config_options(p_ablate)

    return parser


def cmd_generate(args: argparse.Namespace) -> int:
    values = _collect_config(args)
    manifest = generate_dataset(args.out, generator_config_from(values))
    print(manifest)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    values = _collect_config(args)
    samples = read_manifest(args.data)
    model = build_model(model_config_from(values), seed=values["seed"])
    train_cfg = train_config_from(values)
    log_path = args.log if args.log else f"{args.out}.losses.csv"
    result = train(samples, model, train_cfg, log_path=log_path)
    ckpt.save_checkpoint(
        args.out,
        model,
        config_items=run_config_to_items(values),
        optimizer=result.optimizer,
        epoch=result.epochs_run,
        step=result.steps_run,
    )
    print(args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    from .experiments import evaluate_model
    from .metrics import MetricsReport

    loaded = ckpt.load_checkpoint(args.checkpoint)
    model = ckpt.restore_model(loaded)
    samples = read_manifest(args.data)
    metrics = evaluate_model(model, samples, fold="all")
    report = MetricsReport(variant=loaded.run_config()["variant"], folds=[], aggregate=metrics)
    if args.out:
        write_metrics_csv(args.out, [report])
        print(args.out)
    else:
        print(METRICS_CSV_HEADER)
        for row in report.csv_rows():
            print(row)
    if args.overlay_dir:
        overlay_dir = Path(args.overlay_dir)
        overlay_dir.mkdir(parents=True, exist_ok=True)
        for sample in samples:
            out = model.forward(sample.image[None, None])
            coords, _ = decode_landmarks(out.detection_stack().data[0], upscale=model.upscale)
            stem = Path(sample.name).stem
            write_overlay(overlay_dir / f"{stem}_overlay.pgm", sample.image, coords, gt=sample.landmarks)
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    loaded = ckpt.load_checkpoint(args.checkpoint)
    model = ckpt.restore_model(loaded)
    image = load_image(args.image)
    size = model.config.backbone.input_size
    if image.shape != (size, size):
        raise DataError(f"{args.image}: image shape {image.shape} does not match model input {size}x{size}")
    out = model.forward(image[None, None])
    coords, _ = decode_landmarks(out.detection_stack().data[0], upscale=model.upscale)
    prob = ""
    if out.logit is not None:
        logit = float(np.asarray(out.logit.data).reshape(-1)[0])
        prob = f"{1.0 / (1.0 + np.exp(-logit)):.4f}"
    print(",".join(f"{v:.2f}" for v in coords.reshape(-1)) + f",{prob}")
    if args.overlay:
        write_overlay(args.overlay, image, coords)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    values = _collect_config(args)
    samples = read_manifest(args.data)
    reports = ablation_run(
        samples,
        model_config_from(values),
        train_config_from(values),
        eval_config_from(values),
    )
    Path(args.out).write_text(ablation_csv(reports))
    print(args.out)
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"error: format: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (DataError, OSError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HipgrafError as exc:
        print(f"error: internal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
