"""Command-line interface: train, generate, evaluate, ablate, inspect.

Exit codes: 0 success, 1 runtime failure (bad input files, aborted training,
corrupt checkpoints), 2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunSettings, load_settings, write_manifest
from .data import IdxFormatError, prepare
from .metrics import (
    export_images,
    intensity_stats,
    montage,
    pixel_frechet,
    pixel_mmd,
    save_pgm,
    save_png,
    write_metrics_csv,
)
from .training import ABLATION_MODES, Trainer, TrainingAborted, write_train_log

__all__ = ["main", "build_parser"]

MONTAGE_TILES = 25

ABLATION_SUITES = {
    "noise": [("learned", "none"),
              ("uniform01", "noise_uniform01"),
              ("gauss", "noise_gauss")],
    "mapping": [("calibrated", "none"),
                ("max_normalize", "map_max")],
    "calibration": [("full", "none"),
                    ("no_smoothing", "calib_knockout:smoothing"),
                    ("no_deviation", "calib_knockout:deviation"),
                    ("no_normalization", "calib_knockout:normalization"),
                    ("no_affine", "calib_knockout:affine")],
}


# ----------------------------------------------------------------------
# argument parsing


def _add_config_options(p: argparse.ArgumentParser, with_data: bool = True) -> None:
    p.add_argument("--config", metavar="FILE", help="INI run configuration")
    p.add_argument("--seed", type=int, help="master seed (run.seed)")
    p.add_argument("--epochs", type=int, help="training epochs (run.epochs)")
    p.add_argument("--out", metavar="DIR", help="output directory (run.out_dir)")
    p.add_argument("--qubits", type=int, help="data-register qubits (quantum.data_qubits)")
    p.add_argument("--layers", type=int, help="circuit layers (quantum.layers)")
    p.add_argument("--batch-size", type=int, help="training.batch_size")
    p.add_argument("--n-critic", type=int, help="critic steps per generator step")
    p.add_argument("--ablation", choices=ABLATION_MODES, help="training.ablation")
    if with_data:
        p.add_argument("--images", metavar="FILE", help="IDX image file (data.images)")
        p.add_argument("--labels", metavar="FILE", help="IDX label file (data.labels)")
        p.add_argument("--class-label", type=int, help="digit class to model (data.class)")
        p.add_argument("--resize", choices=("downsample_pow2", "pad_crop"),
                       help="how to fit images to the register (data.resize)")
    p.add_argument("--montage-every", type=int,
                   help="epochs between sample sheets (output.montage_every)")
    p.add_argument("--format", choices=("pgm", "png"), dest="image_format",
                   help="image output format (output.format)")


def _overrides(args: argparse.Namespace) -> dict[tuple[str, str], object]:
    pairs = {
        "seed": ("run", "seed"), "epochs": ("run", "epochs"),
        "out": ("run", "out_dir"),
        "qubits": ("quantum", "data_qubits"), "layers": ("quantum", "layers"),
        "batch_size": ("training", "batch_size"),
        "n_critic": ("training", "n_critic"),
        "ablation": ("training", "ablation"),
        "images": ("data", "images"), "labels": ("data", "labels"),
        "class_label": ("data", "class"), "resize": ("data", "resize"),
        "montage_every": ("output", "montage_every"),
        "image_format": ("output", "format"),
    }
    return {dest: getattr(args, name) for name, dest in pairs.items()
            if getattr(args, name, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quigan",
        description="Quantum-circuit image generator with adversarial training.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("train", help="train a model and write checkpoints, logs, samples")
    _add_config_options(p)
    p.add_argument("--resume", metavar="CKPT", help="continue from a checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample images from a trained checkpoint")
    p.add_argument("--checkpoint", required=True, metavar="CKPT")
    p.add_argument("--count", type=int, default=MONTAGE_TILES, help="images to draw")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--format", choices=("pgm", "png"), dest="image_format", default="pgm")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a checkpoint against held-out data")
    _add_config_options(p)
    p.add_argument("--checkpoint", required=True, metavar="CKPT")
    p.add_argument("--eval-seeds", type=int, default=3, help="independent sample draws")
    p.add_argument("--count", type=int, help="images per draw (default: test size)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score a suite of pipeline variants")
    _add_config_options(p)
    p.add_argument("--suite", required=True, choices=sorted(ABLATION_SUITES))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="print a checkpoint's metadata and tensors")
    p.add_argument("checkpoint", metavar="CKPT")
    p.set_defaults(func=cmd_inspect)

    return parser


# ----------------------------------------------------------------------
# commands


def _epoch_line(row, total: int) -> str:
    return (f"epoch {row.epoch:>3}/{total}  critic {row.critic_loss:+.4f}  "
            f"wasserstein {row.wasserstein:+.4f}  acceptance {row.acceptance:.3f}  "
            f"brightness {row.brightness:5.1f}  contrast {row.contrast:5.1f}  "
            f"({row.seconds:.1f}s)")


def _save_montage(trainer: Trainer, settings: RunSettings, path: str) -> None:
    images = trainer.generate(MONTAGE_TILES, seed=trainer.config.seed)
    sheet = montage(trainer.data.eval_view(images))
    (save_pgm if settings.image_format == "pgm" else save_png)(path, sheet)


def cmd_train(args: argparse.Namespace) -> int:
    settings = load_settings(args.config, _overrides(args))
    data = prepare(settings.require_dataset())
    out_dir = settings.require_out_dir()
    os.makedirs(out_dir, exist_ok=True)

    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume, data)
        if args.epochs is not None:  # extend or shorten the target on resume
            trainer.config.epochs = args.epochs
        print(f"resumed from {args.resume} at epoch {trainer.epoch}")
    else:
        trainer = Trainer(settings.train, data)
    total = trainer.config.epochs
    write_manifest(os.path.join(out_dir, "manifest.ini"), settings, sys.argv)

    ckpt_path = os.path.join(out_dir, "checkpoint.qck")
    ext = settings.image_format

    def on_epoch_end(tr: Trainer, row) -> None:
        print(_epoch_line(row, total))
        tr.save(ckpt_path)
        write_train_log(os.path.join(out_dir, "train_log.csv"), tr.history)
        if row.epoch % settings.montage_every == 0 or row.epoch == total:
            _save_montage(tr, settings,
                          os.path.join(out_dir, f"samples_epoch_{row.epoch:04d}.{ext}"))

    remaining = total - trainer.epoch
    if remaining <= 0:
        print(f"checkpoint already at epoch {trainer.epoch}; nothing to train")
        return 0
    trainer.train(remaining, on_epoch_end=on_epoch_end)
    print(f"done: checkpoint {ckpt_path}, log {out_dir}/train_log.csv")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    if args.count < 1:
        raise ConfigError([f"--count must be positive, got {args.count}"])
    trainer = Trainer.from_checkpoint(args.checkpoint)
    images = trainer.data.eval_view(trainer.generate(args.count, seed=args.seed))
    paths = export_images(images, args.out, fmt=args.image_format,
                          montage_name="montage")
    print(f"wrote {args.count} images and a montage to {args.out} "
          f"({paths[0].name} .. {paths[args.count - 1].name})")
    return 0


def _score_rows(trainer: Trainer, real: np.ndarray, count: int,
                seeds: range, block: int) -> list[dict]:
    rows = []
    for s in seeds:
        fake = trainer.data.eval_view(trainer.generate(count, seed=s))
        stats = intensity_stats(fake)
        rows.append({
            "seed": s,
            "mmd": pixel_mmd(real, fake, block=block),
            "frechet": pixel_frechet(real, fake, block=block),
            "brightness": stats.brightness_mean,
            "contrast": stats.contrast_mean,
        })
    return rows


def _mean_std(rows: list[dict], key: str) -> tuple[float, float]:
    vals = np.array([row[key] for row in rows], dtype=np.float64)
    return float(vals.mean()), float(vals.std())


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = load_settings(args.config, _overrides(args))
    data = prepare(settings.require_dataset())
    trainer = Trainer.from_checkpoint(args.checkpoint, data)

    count = args.count or data.test.shape[0]
    count = min(count, data.test.shape[0])
    real = data.eval_view(data.test)[:count]
    block = 4 if data.inner_side % 4 == 0 else 1
    rows = _score_rows(trainer, real, count, range(args.eval_seeds), block)

    for row in rows:
        print(f"seed {row['seed']}  mmd {row['mmd']:.6f}  frechet {row['frechet']:.6f}  "
              f"brightness {row['brightness']:.1f}  contrast {row['contrast']:.1f}")
    summary = {}
    for key in ("mmd", "frechet", "brightness", "contrast"):
        mean, std = _mean_std(rows, key)
        summary[key] = (mean, std)
        print(f"{key}: {mean:.6f} +/- {std:.6f}")

    if settings.out_dir:
        os.makedirs(settings.out_dir, exist_ok=True)
        out_csv = os.path.join(settings.out_dir, "evaluation.csv")
        csv_rows = [dict(row) for row in rows]
        csv_rows.append({"seed": "mean", **{k: v[0] for k, v in summary.items()}})
        csv_rows.append({"seed": "std", **{k: v[1] for k, v in summary.items()}})
        write_metrics_csv(out_csv, csv_rows)
        print(f"wrote {out_csv}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    settings = load_settings(args.config, _overrides(args))
    data = prepare(settings.require_dataset())
    out_dir = settings.require_out_dir()
    os.makedirs(out_dir, exist_ok=True)

    count = data.test.shape[0]
    real = data.eval_view(data.test)[:count]
    block = 4 if data.inner_side % 4 == 0 else 1

    rows = []
    for name, mode in ABLATION_SUITES[args.suite]:
        config = replace(settings.train, ablation=mode)
        print(f"[{args.suite}:{name}] training {config.epochs} epochs "
              f"(ablation={mode})")
        trainer = Trainer(config, data)
        history = trainer.train()
        scored = _score_rows(trainer, real, count, range(1), block)[0]
        rows.append({
            "variant": name,
            "ablation": mode,
            "mmd": scored["mmd"],
            "frechet": scored["frechet"],
            "brightness": scored["brightness"],
            "contrast": scored["contrast"],
            "final_acceptance": history[-1].acceptance,
        })
        print(f"[{args.suite}:{name}] mmd {scored['mmd']:.6f}  "
              f"frechet {scored['frechet']:.6f}")

    out_csv = os.path.join(out_dir, f"ablation_{args.suite}.csv")
    write_metrics_csv(out_csv, rows)
    best = min(rows, key=lambda r: r["mmd"])
    print(f"best variant by mmd: {best['variant']} ({best['mmd']:.6f}); wrote {out_csv}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    tensors, metadata = load_checkpoint(args.checkpoint)
    print(f"checkpoint: {args.checkpoint}")
    print(f"kind: {metadata.get('kind', '?')}  epoch: {metadata.get('epoch', '?')}")
    printable = {k: v for k, v in metadata.items() if k not in ("kind", "epoch")}
    print(json.dumps(printable, indent=2, sort_keys=True))
    print(f"tensors ({len(tensors)}):")
    width = max((len(name) for name in tensors), default=0)
    for name, value in tensors.items():
        stats = (f"min {value.min():+.4e}  max {value.max():+.4e}  "
                 f"rms {np.sqrt(np.mean(value ** 2)):.4e}" if value.size else "empty")
        print(f"  {name:<{width}}  {str(value.shape):<14} {stats}")
    return 0


# ----------------------------------------------------------------------
# entry point


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IdxFormatError as exc:  # malformed data files are runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingAborted, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # validation surfaced below the config layer
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
