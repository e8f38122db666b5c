"""Command-line entrypoint.

Subcommands: ``train``, ``evaluate``, ``infer``, ``serve``, and
``dataset validate``.  Exit codes: 0 success, 1 validation/processing
failure, 2 usage error.  Artifact locations are always explicit flags;
seeds default to 1234 so every pipeline is reproducible by default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .checkpoint import load_checkpoint, read_checkpoint_info
from .dataset import load_fsc147, validate_dataset
from .errors import TextcountError
from .evaluation import evaluate_split
from .inference import InferenceSettings, predict
from .model import ModelConfig, init_model
from .overlay import save_overlay
from .service import DEFAULT_MAX_PAYLOAD, create_app, rounded_count
from .training import (RecordDataset, TrainConfig, TrainValSplits, fit,
                       load_train_config)

EXIT_CODES_HELP = "exit codes: 0 success, 1 validation failure, 2 usage error"

DATASET_LAYOUT_HELP = (
    "data root layout: images/ plus annotations.json (filename -> dot "
    "points), splits.json (split -> filenames), classes.json (filename -> "
    "class name); descriptions file maps filename -> written description")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textcount",
        description="Count objects in images from a written description.",
        epilog=EXIT_CODES_HELP)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_train = sub.add_parser(
        "train", help="train a model on an FSC-147-style dataset",
        description="Train a counting model. " + DATASET_LAYOUT_HELP +
        ". The optional --config is a JSON file of training settings; "
        "checkpoints best.ckpt/last.ckpt and metrics.jsonl land in --out.",
        epilog=EXIT_CODES_HELP)
    p_train.add_argument("--data-root", required=True, help="dataset root directory")
    p_train.add_argument("--descriptions", required=True,
                         help="JSON file of per-image descriptions")
    p_train.add_argument("--config", help="JSON training config file")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--model", choices=("default", "toy"), default="default",
                         help="architecture preset (toy = tiny CPU-sized net)")
    p_train.add_argument("--epochs", type=int,
                         help="override the configured epoch count")
    p_train.add_argument("--seed", type=int,
                         help="override the configured rng seed (default 1234)")
    p_train.add_argument("--pretrained",
                         help="pretrained contrastive image-text weights (.pt)")
    p_train.add_argument("--train-split", default="train")
    p_train.add_argument("--val-split", default="val")

    p_eval = sub.add_parser(
        "evaluate", help="report MAE/RMSE for a checkpoint on a split",
        description="Evaluate a checkpoint. " + DATASET_LAYOUT_HELP +
        ". Writes per-sample records and aggregates as JSON to --out.",
        epilog=EXIT_CODES_HELP)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-root", required=True)
    p_eval.add_argument("--descriptions", required=True)
    p_eval.add_argument("--split", required=True, choices=("train", "val", "test"))
    p_eval.add_argument("--prompt-mode", choices=("class-name", "description"),
                        default="description")
    p_eval.add_argument("--out", help="JSON results path (default: stdout summary only)")

    p_infer = sub.add_parser(
        "infer", help="count one image for one text prompt",
        description="Run a single prediction; prints the count and "
        "optionally writes a density-overlay PNG and a JSON result.",
        epilog=EXIT_CODES_HELP)
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--image", required=True, help="PNG/JPEG image path")
    p_infer.add_argument("--text", required=True, help="description of what to count")
    p_infer.add_argument("--overlay-out", help="where to write the overlay PNG")
    p_infer.add_argument("--json-out", help="where to write the result JSON")
    p_infer.add_argument("--window-side", type=int, default=384)
    p_infer.add_argument("--stride", type=int, default=128)

    p_serve = sub.add_parser(
        "serve", help="run the HTTP counting service",
        description="Serve POST /api/count, GET /api/health, GET "
        "/api/model; optionally mount a static browser UI under /ui.",
        epilog=EXIT_CODES_HELP)
    p_serve.add_argument("--checkpoint", help="checkpoint to serve")
    p_serve.add_argument("--no-model", action="store_true",
                         help="start without a model (health checks only)")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--max-payload", type=int, default=DEFAULT_MAX_PAYLOAD,
                         help="request size limit in bytes (default 16 MiB)")
    p_serve.add_argument("--ui-dir", help="static UI bundle to mount at /ui")

    p_dataset = sub.add_parser(
        "dataset", help="dataset tooling",
        description="Dataset subcommands.", epilog=EXIT_CODES_HELP)
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command",
                                           metavar="subcommand")
    p_validate = dataset_sub.add_parser(
        "validate", help="check dataset integrity and write a report",
        description="Validate dataset structure. " + DATASET_LAYOUT_HELP +
        ". Writes a JSON report and exits 1 when violations are found.",
        epilog=EXIT_CODES_HELP)
    p_validate.add_argument("--data-root", required=True)
    p_validate.add_argument("--descriptions", required=True)
    p_validate.add_argument("--report-out",
                            help="report path (default: <data-root>/validation_report.json)")

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    if args.command == "dataset" and args.dataset_command is None:
        print("usage: textcount dataset validate --data-root ROOT "
              "--descriptions FILE [--report-out PATH]", file=sys.stderr)
        return 2
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "infer":
            return _cmd_infer(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "dataset":
            return _cmd_dataset_validate(args)
    except TextcountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    raise AssertionError(f"unhandled command {args.command}")


def _cmd_train(args) -> int:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    model_config = ModelConfig.toy() if args.model == "toy" else ModelConfig()
    model = init_model(model_config, pretrained=args.pretrained, seed=cfg.seed)

    index = load_fsc147(args.data_root, args.descriptions)
    for split in (args.train_split, args.val_split):
        if split not in index.splits:
            print(f"error: split {split!r} not in dataset "
                  f"(have {sorted(index.splits)})", file=sys.stderr)
            return 1
    splits = TrainValSplits(train=RecordDataset(index.splits[args.train_split]),
                            val=RecordDataset(index.splits[args.val_split]))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    val_settings = None
    if args.model == "toy":
        size = model_config.image_size
        val_settings = InferenceSettings(working_height=size, window_side=size,
                                         stride=max(1, size // 2))
    result = fit(model, splits, cfg, epochs=args.epochs, out_dir=out_dir,
                 log_path=out_dir / "metrics.jsonl", val_settings=val_settings,
                 progress=lambda r: print(
                     f"epoch {r.epoch}: loss {r.train_loss:.4f} "
                     f"val MAE {r.val_mae:.3f} RMSE {r.val_rmse:.3f} "
                     f"lr {r.lr:.3e}"))
    print(f"best epoch {result.best_epoch} (val MAE {result.best_val_mae:.3f})")
    print(f"checkpoints: {result.best_path} / {result.last_path}")
    return 0


def _cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    index = load_fsc147(args.data_root, args.descriptions)
    result = evaluate_split(model, index, args.split, prompt_mode=args.prompt_mode)
    print(result.summary_line())
    if args.out:
        result.save(args.out)
        print(f"wrote {args.out}")
    return 0


def _load_image_file(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        print(f"error: cannot read image {path}: {exc}", file=sys.stderr)
        raise SystemExit(1)


def _cmd_infer(args) -> int:
    model = load_checkpoint(args.checkpoint)
    image = _load_image_file(args.image)
    settings = InferenceSettings(window_side=args.window_side, stride=args.stride)
    result = predict(model, image, args.text, settings=settings)
    rounded = rounded_count(result.count)
    print(f"count: {result.count:.2f} (rounded: {rounded})")
    if args.overlay_out:
        save_overlay(args.overlay_out, image, result.density)
        print(f"overlay: {args.overlay_out}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps({
            "count": result.count, "rounded_count": rounded,
            "window_counts": result.window_counts, "prompt": result.prompt,
        }, indent=2))
        print(f"result json: {args.json_out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    if args.no_model:
        model, model_id = None, "none"
    elif args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        model_id = Path(args.checkpoint).name
        _config, metadata = read_checkpoint_info(args.checkpoint)
        model.checkpoint_metadata = metadata
    else:
        print("error: pass --checkpoint or --no-model", file=sys.stderr)
        return 2
    app = create_app(model, model_id=model_id, max_payload=args.max_payload,
                     ui_dir=args.ui_dir)
    serve(app, host=args.host, port=args.port)
    return 0


def _cmd_dataset_validate(args) -> int:
    index = load_fsc147(args.data_root, args.descriptions)
    report = validate_dataset(index)
    report_path = Path(args.report_out) if args.report_out else \
        Path(args.data_root) / "validation_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2))
    print(f"report: {report_path}")
    if not report.ok:
        for violation in report.violations:
            print(f"violation: {violation}", file=sys.stderr)
        return 1
    print("dataset ok")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
