"""Command line entry point: ``bcanet <command> ...`` or ``python -m bcanet``.

Exit codes: 0 success, 1 other failure, 2 configuration error,
3 training aborted, 4 gradient check failed.
"""

from __future__ import annotations

import argparse
import sys

from . import gradcheck
from .checkpoint import Checkpoint, CheckpointError
from .config import MODEL_KINDS, ConfigError, dump_config, load_config
from .data import write_dataset
from .trainer import TrainingAborted, evaluate, metrics_csv, train
from .visualize import export

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_ABORT, EXIT_GRADCHECK = 0, 1, 2, 3, 4


def _config(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc


def _ref(text: str) -> tuple[int, int]:
    try:
        y, x = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected Y,X integers, got {text!r}") from exc
    return y, x


def cmd_gen_data(args) -> int:
    cfg = _config(args.config)
    rows = write_dataset(cfg.scene, cfg.train.n_train, cfg.train.n_val, args.out)
    print(f"wrote {3 * len(rows)} files and manifest.csv to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args.config)

    def report(row):
        print(
            f"epoch {row['epoch']:3d}  total {row['total']:.4f}  val_miou {row['val_miou']:.4f}  lr {row['lr']:.6f}",
            flush=True,
        )

    result = train(cfg, args.model, out_dir=args.out, on_epoch=None if args.quiet else report)
    print(f"final val mIoU {result.log[-1]['val_miou']:.4f}" if result.log else "no iterations run")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    cfg = _config(args.config) if args.config else None
    sys.stdout.write(metrics_csv(evaluate(ckpt, args.split, cfg)))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = gradcheck.run_scope(args.scope, seed=args.seed)
    for r in reports:
        status = "ok" if r.max_rel_err < gradcheck.TOLERANCE else "FAIL"
        print(f"{r.name:40s} entries {r.n_checked:5d}  max_rel_err {r.max_rel_err:.3e}  max_abs_diff {r.max_abs_diff:.3e}  {status}")
    worst = gradcheck.worst(reports)
    if worst.max_rel_err >= gradcheck.TOLERANCE:
        print(
            f"gradcheck {args.scope} failed: worst {worst.name} entry {worst.worst_index} "
            f"rel err {worst.max_rel_err:.3e}",
            file=sys.stderr,
        )
        return EXIT_GRADCHECK
    print(f"gradcheck {args.scope} passed: max rel err {worst.max_rel_err:.3e} < {gradcheck.TOLERANCE:g}")
    return EXIT_OK


def cmd_visualize(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    cfg = _config(args.config) if args.config else None
    vis = export(ckpt, args.image, args.ref, args.out, cfg)
    for path in vis.files:
        print(path)
    return EXIT_OK


def cmd_dump_config(args) -> int:
    sys.stdout.write(dump_config(_config(args.config)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bcanet", description="Boundary-guided context aggregation on synthetic scenes.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", help="write the synthetic splits as PPM/PGM files")
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train one model variant")
    s.add_argument("--config")
    s.add_argument("--model", choices=MODEL_KINDS, default="bcanet")
    s.add_argument("--out", required=True)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="print metrics CSV for a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", choices=("train", "val"), default="val")
    s.add_argument("--config")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference gradient check")
    s.add_argument("--scope", choices=gradcheck.SCOPES, default="full")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("visualize", help="export attention, similarity and edge maps")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--image", type=int, required=True)
    s.add_argument("--ref", type=_ref, required=True, help="reference pixel as Y,X in input coordinates")
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_visualize)

    s = sub.add_parser("dump-config", help="print the effective configuration")
    s.add_argument("--config")
    s.set_defaults(func=cmd_dump_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (OSError, CheckpointError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
