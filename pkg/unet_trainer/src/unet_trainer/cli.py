"""Command-line interface: prepare | train | predict."""

from __future__ import annotations

import argparse
import sys

from .data import prepare_slices
from .predict import predict_volume
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unet-trainer",
                                     description="toy MC-dropout U-Net for phantom slices")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("prepare", help="extract training slices from a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = subs.add_parser("train", help="train on a prepared slice dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--fold-plan", default=None)
    p.add_argument("--fold", type=int, default=None)

    p = subs.add_parser("predict", help="segment a HU volume with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mc-samples", type=int, default=8)
    p.add_argument("--uncertainty", default=None)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "prepare":
        index = prepare_slices(args.manifest, args.out, args.seed)
        print(index)
        return 0
    if args.command == "train":
        config = TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            dropout=args.dropout,
            seed=args.seed,
            base_channels=args.base_channels,
            fold_plan=args.fold_plan,
            fold=args.fold,
        )
        train(config, args.dataset, args.checkpoint)
        print(args.checkpoint)
        return 0
    predict_volume(
        args.checkpoint,
        args.volume,
        args.out,
        mc_samples=args.mc_samples,
        uncertainty_path=args.uncertainty,
        seed=args.seed,
    )
    print(args.out)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
