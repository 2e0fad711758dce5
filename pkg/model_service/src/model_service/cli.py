"""CLI: train a config on encoded prompt files, or serve a checkpoint."""

from __future__ import annotations

import argparse
import sys

from .training import TrainingError, TrainingHyperparams, fine_tune, read_manifest


def cmd_train(args) -> int:
    hp = TrainingHyperparams(
        max_input_tokens=args.max_input_tokens,
        max_output_tokens=args.max_output_tokens,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        batch_size=args.batch_size,
        base_checkpoint=args.base,
    )
    out = fine_tune(args.train, args.val, hp, seed=args.seed,
                    out_dir=args.out, overwrite=args.overwrite)
    manifest = read_manifest(out)
    print(f"wrote checkpoint {out} (config {manifest['config']}, "
          f"best epoch {manifest['best_epoch']}, "
          f"val loss {manifest['best_val_loss']:.4f})")
    return 0


def cmd_serve(args) -> int:
    from .serving import serve

    serve(args.ckpt, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgc-model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune on encoded prompt files")
    p.add_argument("--config", help="config letter (informational; the prompt "
                                    "file metadata is authoritative)")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base", default="t5-base")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-input-tokens", type=int, default=512)
    p.add_argument("--max-output-tokens", type=int, default=128)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="serve a checkpoint on /v1/generate")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
