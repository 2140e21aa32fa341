"""Command-line surface for batch experiments.

Subcommands: split, engage, pspi, select, train, score, eval. Report-style
commands (engage, select, train, eval) also render a PNG figure next to
the delimited output unless --no-figs is given. Exit codes: 0 success,
2 usage error, 3 data error, 4 training/numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import figures
from .core import AupainError, DataError, TrainingError
from .engagement import read_profile, write_profile
from .evaluation import (
    ConfusionMatrix,
    PipelineConfig,
    ablate_top_k,
    cross_validate,
    fold_engagement_profile,
    format_report_table,
    load_frame_records,
    write_report_kv,
)
from .ingestion import (
    load_au_intensities,
    load_manifest,
    read_folds,
    subject_folds,
    write_folds,
)
from .pspi import EyeMode, pspi
from .regressor import TrainConfig, predict, read_model, train, write_model

logger = logging.getLogger(__name__)

USAGE_ERROR = 2
DATA_ERROR = 3
TRAINING_ERROR = 4


@dataclass
class CommandResult:
    exit_code: int
    artifacts: list[Path] = field(default_factory=list)


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--lr", type=float, default=0.01, help="Adam learning rate")
    sub.add_argument("--batch-size", type=int, default=8, help="mini-batch size")
    sub.add_argument("--epochs", type=int, default=100, help="training epochs")
    sub.add_argument("--beta", type=float, default=1.0, help="smooth-L1 beta")
    sub.add_argument("--dropout", type=float, default=0.05, help="hidden-layer dropout rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aupain", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name: str, help_text: str, seed: bool = False, figs: bool = False):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--out", required=True, help="output file path")
        p.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
        if seed:
            p.add_argument("--seed", type=int, required=True, help="random seed (mandatory)")
        if figs:
            p.add_argument("--no-figs", action="store_true", help="skip figure rendering")
        return p

    p = sub("split", "split subjects into disjoint folds", seed=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated fold sizes, e.g. 16,16,16,16,12")

    p = sub("engage", "compute the AU engagement profile from CAM frames", figs=True)
    p.add_argument("--manifest", required=True)

    p = sub("pspi", "score frames with the PSPI baseline")
    p.add_argument("--au", required=True, help="AU intensity CSV")
    p.add_argument("--mode", choices=["binary", "intensity"], default="binary")
    p.add_argument("--clamp", action="store_true", help="clamp intensities into [0, 5]")

    p = sub("select", "ablate the number of core AUs", seed=True, figs=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=12)
    p.add_argument("--profile", help="fixed engagement profile (else per-fold from CAMs)")
    _add_train_flags(p)

    p = sub("train", "train the engagement-weighted regressor", seed=True, figs=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, required=True, help="number of core AUs")
    p.add_argument("--profile", required=True, help="engagement profile file")
    p.add_argument("--val-manifest", help="held-out manifest for model selection")
    p.add_argument("--clamp", action="store_true")
    _add_train_flags(p)

    p = sub("score", "score frames with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--au", required=True, help="AU intensity CSV")
    p.add_argument("--clamp", action="store_true")

    p = sub("eval", "cross-validate a method over subject folds", seed=True, figs=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--method", choices=["pspi", "aue", "aue-weighted"], default="aue-weighted")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--profile", help="fixed engagement profile (else per-fold from CAMs)")
    p.add_argument("--eye-mode", choices=["binary", "intensity"], default="binary")
    p.add_argument("--clamp", action="store_true")
    _add_train_flags(p)

    return parser


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        smooth_l1_beta=args.beta,
        dropout_rate=args.dropout,
        seed=args.seed,
    )


def _say(args: argparse.Namespace, message: str) -> None:
    if not args.quiet:
        print(message)


def _cmd_split(args: argparse.Namespace) -> list[Path]:
    manifest = load_manifest(args.manifest)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise DataError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    spec = subject_folds(manifest, sizes, args.seed)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        write_folds(spec, fh)
    _say(args, f"wrote {out}: {len(spec.folds)} disjoint folds over {len(manifest.subjects)} subjects")
    return [out]


def _cmd_engage(args: argparse.Namespace) -> list[Path]:
    manifest = load_manifest(args.manifest)
    profile = fold_engagement_profile(manifest, manifest.entries)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        write_profile(profile, fh)
    artifacts = [out]
    if not args.no_figs:
        artifacts.append(figures.engagement_bar(profile, out.with_suffix(".png")))
    top = ", ".join(f"AU{au}" for au in profile.ranking[:3])
    _say(args, f"wrote {out}: engagement over {profile.frame_count} frames, top AUs {top}")
    return artifacts


def _cmd_pspi(args: argparse.Namespace) -> list[Path]:
    vectors = load_au_intensities(args.au, clamp=args.clamp)
    mode = EyeMode.parse(args.mode)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# pspi scores, eye mode {mode.value}\n")
        for frame_id, vec in vectors.items():
            fh.write(f"{frame_id} {float(pspi(vec, mode).value)!r}\n")
    _say(args, f"wrote {out}: PSPI scores for {len(vectors)} frames")
    return [out]


def _cmd_select(args: argparse.Namespace) -> list[Path]:
    manifest = load_manifest(args.manifest)
    with open(args.folds, "r", encoding="utf-8") as fh:
        folds = read_folds(fh)
    profile = None
    if args.profile:
        with open(args.profile, "r", encoding="utf-8") as fh:
            profile = read_profile(fh)
    if args.k_min < 1 or args.k_max < args.k_min:
        raise DataError(f"bad k range [{args.k_min}, {args.k_max}]")
    config = PipelineConfig(method="aue-weighted", train_config=_train_config(args), profile=profile)
    result = ablate_top_k(manifest, folds, range(args.k_min, args.k_max + 1), config)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# top-k ablation, seed {args.seed}, folds {len(folds.folds)}\n")
        for k in sorted(result.losses):
            fh.write(f"k {k} {float(result.losses[k])!r}\n")
        fh.write(f"best_k {result.best_k}\n")
    artifacts = [out]
    if not args.no_figs:
        artifacts.append(figures.ablation_curve(result, out.with_suffix(".png")))
    _say(args, f"wrote {out}: best k = {result.best_k}")
    return artifacts


def _cmd_train(args: argparse.Namespace) -> list[Path]:
    manifest = load_manifest(args.manifest)
    with open(args.profile, "r", encoding="utf-8") as fh:
        profile = read_profile(fh)
    records = load_frame_records(manifest, clamp=args.clamp)
    train_pairs = [(r.au, r.entry.label) for r in records]
    val_pairs = []
    if args.val_manifest:
        val_manifest = load_manifest(args.val_manifest)
        val_pairs = [(r.au, r.entry.label) for r in load_frame_records(val_manifest, clamp=args.clamp)]
    model, history = train(train_pairs, val_pairs, profile, args.k, _train_config(args))
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        write_model(model, fh)
    history_path = out.with_suffix(out.suffix + ".history")
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("# epoch train_loss val_loss\n")
        for i, (tl, vl) in enumerate(zip(history.train_loss, history.val_loss), start=1):
            fh.write(f"{i} {float(tl)!r} {float(vl)!r}\n")
    artifacts = [out, history_path]
    if not args.no_figs and history.train_loss:
        artifacts.append(figures.history_curves(history, out.with_suffix(".png")))
    final = history.val_loss[-1] if history.val_loss else float("nan")
    _say(args, f"wrote {out}: k={args.k} model, final validation loss {final:.4f}")
    return artifacts


def _cmd_score(args: argparse.Namespace) -> list[Path]:
    with open(args.model, "r", encoding="utf-8") as fh:
        model = read_model(fh)
    vectors = load_au_intensities(args.au, clamp=args.clamp)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# pain intensity predictions, k {len(model.core_aus)}\n")
        for frame_id, vec in vectors.items():
            fh.write(f"{frame_id} {float(predict(model, vec))!r}\n")
    _say(args, f"wrote {out}: predictions for {len(vectors)} frames")
    return [out]


def _cmd_eval(args: argparse.Namespace) -> list[Path]:
    manifest = load_manifest(args.manifest)
    with open(args.folds, "r", encoding="utf-8") as fh:
        folds = read_folds(fh)
    profile = None
    if args.profile:
        with open(args.profile, "r", encoding="utf-8") as fh:
            profile = read_profile(fh)
    config = PipelineConfig(
        method=args.method,
        k=args.k,
        train_config=_train_config(args),
        eye_mode=EyeMode.parse(args.eye_mode),
        profile=profile,
        clamp=args.clamp,
    )
    result = cross_validate(manifest, folds, config)
    out = Path(args.out)
    rows = [(f"{args.method}/f{i}", r) for i, r in enumerate(result.fold_reports)]
    rows.append((f"{args.method}/mean", result.mean_report))
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# eval method={args.method} k={args.k} seed={args.seed}\n")
        fh.write(format_report_table(rows))
    kv_path = out.with_suffix(out.suffix + ".kv")
    with open(kv_path, "w", encoding="utf-8") as fh:
        write_report_kv(result, fh)
    artifacts = [out, kv_path]
    if not args.no_figs:
        counts = sum(o.cm.counts for o in result.outcomes)
        pooled = ConfusionMatrix(counts=counts, class_names=result.outcomes[0].cm.class_names)
        artifacts.append(
            figures.confusion_heatmap(pooled, out.with_suffix(".png"), title=f"{args.method}, pooled folds")
        )
    mean = result.mean_report
    _say(
        args,
        f"wrote {out}: mean WA {100 * mean.weighted_accuracy:.1f}%, "
        f"UA {100 * mean.unweighted_accuracy:.1f}%, F1 {mean.weighted_f1:.3f}",
    )
    return artifacts


_HANDLERS = {
    "split": _cmd_split,
    "engage": _cmd_engage,
    "pspi": _cmd_pspi,
    "select": _cmd_select,
    "train": _cmd_train,
    "score": _cmd_score,
    "eval": _cmd_eval,
}


def run(argv: list[str]) -> CommandResult:
    """Execute one CLI invocation; never raises, returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else USAGE_ERROR
        return CommandResult(exit_code=0 if code == 0 else USAGE_ERROR)
    try:
        artifacts = _HANDLERS[args.command](args)
        return CommandResult(exit_code=0, artifacts=artifacts)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandResult(exit_code=TRAINING_ERROR)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandResult(exit_code=DATA_ERROR)
    except AupainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandResult(exit_code=DATA_ERROR)


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    raise SystemExit(run(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
