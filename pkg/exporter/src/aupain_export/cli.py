"""Command-line entry points: `finetune` trains the backbone on manifest
frames, `export` writes the CAM bundle for a trained checkpoint."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import export_cams
from .formats import FormatError, num_levels, read_manifest
from .model import FinetuneConfig, FrameImageDataset, finetune, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aupain-export")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("finetune", help="fine-tune the classifier on manifest frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True, help="directory of <frame_id>.png face crops")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--arch", choices=["resnet18", "resnet34"], default="resnet18")
    p.add_argument("--weights", choices=["none", "imagenet"], default="none",
                   help="imagenet needs torchvision checkpoint download access")
    p.add_argument("--image-size", type=int, default=224)

    p = subs.add_parser("export", help="write CAM1 files and an updated manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--model", required=True, help="checkpoint from finetune")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--target-class", choices=["predicted", "true"], default="predicted")
    return parser


def _dataset_from_manifest(manifest: str, images: str, image_size: int) -> tuple[FrameImageDataset, int]:
    rows = read_manifest(manifest)
    if not rows:
        raise FormatError(f"{manifest}: no frames")
    schemes = {r.scheme for r in rows}
    if len(schemes) != 1:
        raise FormatError(f"manifest mixes schemes {sorted(schemes)}")
    paths = [Path(images) / f"{r.frame_id}.png" for r in rows]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FormatError(f"missing images: {missing[:3]}{'...' if len(missing) > 3 else ''}")
    levels = [r.level() for r in rows]
    return FrameImageDataset(paths, levels, image_size), num_levels(rows[0].scheme)


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        if args.command == "finetune":
            config = FinetuneConfig(
                epochs=args.epochs,
                learning_rate=args.lr,
                weight_decay=args.weight_decay,
                batch_size=args.batch_size,
                seed=args.seed,
                arch=args.arch,
                weights=args.weights,
                image_size=args.image_size,
            )
            dataset, classes = _dataset_from_manifest(args.manifest, args.images, args.image_size)
            result = finetune(dataset, classes, config)
            save_checkpoint(result, classes, config, args.out)
            print(
                f"wrote {args.out}: best accuracy {result.best_accuracy:.3f} "
                f"at epoch {result.best_epoch + 1}/{config.epochs}"
            )
        else:
            model, payload = load_checkpoint(args.model)
            bundle = export_cams(
                model,
                args.manifest,
                args.images,
                args.out_dir,
                target_class=args.target_class,
                image_size=payload.get("image_size", 224),
            )
            print(
                f"wrote {bundle.manifest_path}: {len(bundle.predictions)} CAM files, "
                f"{len(bundle.failed_frames)} failures"
            )
        return 0
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
