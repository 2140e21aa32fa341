"""Classification metrics, subject-disjoint cross-validation, and the
top-k core-AU ablation.

Metric conventions: per-class precision/recall/F1 come from one-vs-rest
counts; weighted aggregates use class support as weights (so weighted
recall equals overall accuracy); unweighted accuracy is the macro-average
recall over classes that actually occur (balanced accuracy). Zero
denominators score 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Callable, Mapping, Sequence

import numpy as np

from .core import AUIntensityVector, DataError, LabelScheme, PainLevel, level_names
from .engagement import EngagementProfile, aggregate_engagement
from .ingestion import (
    DatasetManifest,
    FoldSpec,
    FrameEntry,
    bin_label,
    load_activation_map,
    load_au_intensities,
    load_landmarks,
)
from .pspi import EyeMode, calibrate_thresholds, pspi, pspi_classify
from .regressor import TrainConfig, TrainHistory, predict, train


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts[true][predicted] over one evaluation; rows sum to support."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=int)
        L = len(self.class_names)
        if counts.shape != (L, L):
            raise DataError(f"confusion matrix shape {counts.shape} != ({L}, {L})")
        if np.any(counts < 0):
            raise DataError("confusion matrix counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        counts.setflags(write=False)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricReport:
    weighted_accuracy: float
    unweighted_accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: tuple[ClassMetrics, ...]

    def __post_init__(self) -> None:
        if not math.isclose(self.weighted_recall, self.weighted_accuracy, abs_tol=1e-9):
            raise DataError(
                "support-weighted recall must equal overall accuracy "
                f"({self.weighted_recall} vs {self.weighted_accuracy})"
            )

    def as_dict(self) -> dict[str, float]:
        return {
            "weighted_accuracy": self.weighted_accuracy,
            "unweighted_accuracy": self.unweighted_accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
        }


def confusion(preds: Sequence[PainLevel], labels: Sequence[PainLevel], num_classes: int,
              class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    """Tally predicted-versus-true level pairs into an LxL matrix."""
    if len(preds) != len(labels):
        raise DataError(f"{len(preds)} predictions vs {len(labels)} labels")
    if class_names is None:
        class_names = tuple(f"level {i}" for i in range(num_classes))
    counts = np.zeros((num_classes, num_classes), dtype=int)
    for p, t in zip(preds, labels):
        if not (0 <= p.index < num_classes and 0 <= t.index < num_classes):
            raise DataError(f"level pair ({t.index}, {p.index}) outside [0, {num_classes})")
        counts[t.index, p.index] += 1
    return ConfusionMatrix(counts=counts, class_names=tuple(class_names))


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Per-class and support-weighted metrics from a confusion matrix."""
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise DataError("empty confusion matrix")
    per_class: list[ClassMetrics] = []
    recalls_present: list[float] = []
    w_precision = w_recall = w_f1 = 0.0
    for c in range(len(cm.class_names)):
        tp = int(counts[c, c])
        support = int(counts[c, :].sum())
        fn = support - tp
        fp = int(counts[:, c].sum()) - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * tp / (2 * tp + fn + fp) if 2 * tp + fn + fp > 0 else 0.0
        per_class.append(ClassMetrics(precision=precision, recall=recall, f1=f1, support=support))
        if support > 0:
            recalls_present.append(recall)
        w_precision += support * precision
        w_recall += support * recall
        w_f1 += support * f1
    overall_accuracy = float(np.trace(counts)) / total
    return MetricReport(
        weighted_accuracy=overall_accuracy,
        unweighted_accuracy=sum(recalls_present) / len(recalls_present),
        weighted_precision=w_precision / total,
        weighted_recall=w_recall / total,
        weighted_f1=w_f1 / total,
        per_class=tuple(per_class),
    )


# ---------------------------------------------------------------------------
# Cross-validation pipeline


@dataclass(frozen=True)
class FrameRecord:
    entry: FrameEntry
    au: AUIntensityVector
    level: PainLevel


@dataclass(frozen=True)
class PipelineConfig:
    """What to run per fold: the method, its size, and its knobs.

    `method` is one of pspi, aue (core-AU regression, unit weights), or
    aue-weighted (engagement-weighted regression). A fixed engagement
    `profile` skips the per-training-fold profile computation; otherwise
    each fold aggregates engagement from its own training frames' CAMs.
    `predictor` is a hook replacing the method entirely (used by tests):
    it maps (train_records, test_records) to predicted levels.
    """

    method: str = "aue-weighted"
    k: int = 7
    train_config: TrainConfig = field(default_factory=TrainConfig)
    eye_mode: EyeMode = EyeMode.BINARY_EYE
    profile: EngagementProfile | None = None
    clamp: bool = False
    predictor: Callable[[Sequence[FrameRecord], Sequence[FrameRecord]], Sequence[PainLevel]] | None = None

    def __post_init__(self) -> None:
        if self.predictor is None and self.method not in ("pspi", "aue", "aue-weighted"):
            raise DataError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class FoldOutcome:
    fold_index: int
    report: MetricReport
    cm: ConfusionMatrix
    history: TrainHistory | None


@dataclass(frozen=True)
class CrossValidationResult:
    fold_reports: tuple[MetricReport, ...]
    mean_report: MetricReport
    outcomes: tuple[FoldOutcome, ...]


@dataclass(frozen=True)
class AblationResult:
    """Mean best validation loss per candidate k; best_k attains the minimum."""

    losses: Mapping[int, float]
    best_k: int


def manifest_scheme(manifest: DatasetManifest) -> LabelScheme:
    schemes = {e.scheme for e in manifest.entries}
    if len(schemes) != 1:
        raise DataError(f"manifest mixes label schemes {sorted(s.value for s in schemes)}")
    return next(iter(schemes))


def load_frame_records(manifest: DatasetManifest, clamp: bool = False) -> list[FrameRecord]:
    """Join manifest entries with their AU vectors and binned true levels."""
    tables: dict[str, dict[str, AUIntensityVector]] = {}
    records: list[FrameRecord] = []
    for entry in manifest.entries:
        if entry.au_path not in tables:
            tables[entry.au_path] = load_au_intensities(manifest.resolve(entry.au_path), clamp=clamp)
        table = tables[entry.au_path]
        if entry.frame_id not in table:
            raise DataError(f"frame {entry.frame_id!r} missing from AU table {entry.au_path}")
        records.append(
            FrameRecord(
                entry=entry,
                au=table[entry.frame_id],
                level=bin_label(entry.label, entry.scheme),
            )
        )
    return records


def fold_engagement_profile(manifest: DatasetManifest, entries: Sequence[FrameEntry]) -> EngagementProfile:
    """Aggregate engagement over the entries' CAM frames.

    Frames without a CAM path are skipped; frames flagged as incorrectly
    classified are filtered out; an unset flag keeps the frame.
    """
    landmark_tables: dict[str, dict] = {}

    def stream():
        for entry in entries:
            if entry.cam_path is None or entry.correctly_classified is False:
                continue
            if entry.landmark_path not in landmark_tables:
                landmark_tables[entry.landmark_path] = load_landmarks(
                    manifest.resolve(entry.landmark_path)
                )
            lms = landmark_tables[entry.landmark_path]
            if entry.frame_id not in lms:
                raise DataError(
                    f"frame {entry.frame_id!r} missing from landmark table {entry.landmark_path}"
                )
            yield load_activation_map(manifest.resolve(entry.cam_path)), lms[entry.frame_id]

    return aggregate_engagement(stream())


def level_from_prediction(pred: float, scheme: LabelScheme) -> PainLevel:
    """Bin a continuous prediction onto the scheme's levels.

    FLACC predictions clamp into [0, 10] and use the scoring intervals;
    two-level schemes split at the midpoint of their observed scores.
    """
    names = level_names(scheme)
    if scheme is LabelScheme.FLACC4:
        lo, hi = scheme.score_range
        return bin_label(min(max(pred, lo), hi), scheme)
    if scheme is LabelScheme.NFCS2:
        idx = 0 if pred < 2.0 else 1
    else:
        idx = 0 if pred < 0.5 else 1
    return PainLevel(index=idx, name=names[idx])


def _split_records(
    records: Sequence[FrameRecord], fold: frozenset[str]
) -> tuple[list[FrameRecord], list[FrameRecord]]:
    train_recs = [r for r in records if r.entry.subject_id not in fold]
    test_recs = [r for r in records if r.entry.subject_id in fold]
    return train_recs, test_recs


def _check_folds(manifest: DatasetManifest, folds: FoldSpec) -> None:
    known = set(manifest.subjects)
    for i, fold in enumerate(folds.folds):
        unknown = fold - known
        if unknown:
            raise DataError(f"fold {i} references unknown subjects {sorted(unknown)}")


def _regression_predictions(
    manifest: DatasetManifest,
    train_recs: Sequence[FrameRecord],
    test_recs: Sequence[FrameRecord],
    config: PipelineConfig,
) -> tuple[list[PainLevel], TrainHistory]:
    scheme = manifest_scheme(manifest)
    profile = config.profile
    if profile is None:
        profile = fold_engagement_profile(manifest, [r.entry for r in train_recs])
    if config.method == "aue":
        profile = _unit_weight_profile(profile)
    train_pairs = [(r.au, r.entry.label) for r in train_recs]
    test_pairs = [(r.au, r.entry.label) for r in test_recs]
    model, history = train(train_pairs, test_pairs, profile, config.k, config.train_config)
    preds = [level_from_prediction(predict(model, r.au), scheme) for r in test_recs]
    return preds, history


def _unit_weight_profile(profile: EngagementProfile) -> EngagementProfile:
    # Keep the ranking, drop the weighting: every AU fuses with weight 1.
    return EngagementProfile(
        raw=dict(profile.raw),
        normalized={au: 1.0 for au in profile.raw},
        ranking=profile.ranking,
        frame_count=profile.frame_count,
    )


def _pspi_predictions(
    train_recs: Sequence[FrameRecord],
    test_recs: Sequence[FrameRecord],
    config: PipelineConfig,
    scheme: LabelScheme,
) -> list[PainLevel]:
    train_scores = [pspi(r.au, config.eye_mode).value for r in train_recs]
    thresholds = calibrate_thresholds(train_scores, [r.level for r in train_recs])
    names = level_names(scheme)
    return [pspi_classify(pspi(r.au, config.eye_mode), thresholds, names) for r in test_recs]


def cross_validate(
    manifest: DatasetManifest, folds: FoldSpec, config: PipelineConfig
) -> CrossValidationResult:
    """Evaluate the configured method with each fold held out once.

    Per fold, everything data-dependent (engagement profile, thresholds,
    regressor) is fitted on the training subjects only; the held-out
    subjects provide the validation loss and the reported metrics. The
    mean report averages the fold reports with equal weight.
    """
    _check_folds(manifest, folds)
    scheme = manifest_scheme(manifest)
    records = load_frame_records(manifest, clamp=config.clamp)
    names = level_names(scheme)
    outcomes: list[FoldOutcome] = []
    for i, fold in enumerate(folds.folds):
        train_recs, test_recs = _split_records(records, fold)
        if not test_recs:
            raise DataError(f"fold {i} holds no frames")
        if not train_recs:
            raise DataError(f"fold {i} leaves no training frames")
        history: TrainHistory | None = None
        if config.predictor is not None:
            preds = list(config.predictor(train_recs, test_recs))
        elif config.method == "pspi":
            preds = _pspi_predictions(train_recs, test_recs, config, scheme)
        else:
            preds, history = _regression_predictions(manifest, train_recs, test_recs, config)
        cm = confusion(preds, [r.level for r in test_recs], scheme.num_levels, names)
        outcomes.append(FoldOutcome(fold_index=i, report=metrics(cm), cm=cm, history=history))
    fold_reports = tuple(o.report for o in outcomes)
    return CrossValidationResult(
        fold_reports=fold_reports,
        mean_report=mean_report(fold_reports),
        outcomes=tuple(outcomes),
    )


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted average of fold reports (per-class supports are summed)."""
    if not reports:
        raise DataError("no reports to average")
    n = len(reports)
    num_classes = len(reports[0].per_class)
    per_class = tuple(
        ClassMetrics(
            precision=sum(r.per_class[c].precision for r in reports) / n,
            recall=sum(r.per_class[c].recall for r in reports) / n,
            f1=sum(r.per_class[c].f1 for r in reports) / n,
            support=sum(r.per_class[c].support for r in reports),
        )
        for c in range(num_classes)
    )
    mean_wa = sum(r.weighted_accuracy for r in reports) / n
    return MetricReport(
        weighted_accuracy=mean_wa,
        unweighted_accuracy=sum(r.unweighted_accuracy for r in reports) / n,
        weighted_precision=sum(r.weighted_precision for r in reports) / n,
        weighted_recall=mean_wa,
        weighted_f1=sum(r.weighted_f1 for r in reports) / n,
        per_class=per_class,
    )


def ablate_top_k(
    manifest: DatasetManifest,
    folds: FoldSpec,
    k_range: Sequence[int],
    config: PipelineConfig,
) -> AblationResult:
    """Train one regressor per (fold, k); score k by mean best validation loss."""
    k_values = sorted(set(k_range))
    if not k_values or k_values[0] < 1 or k_values[-1] > 12:
        raise DataError(f"k range must lie within [1, 12], got {k_values}")
    _check_folds(manifest, folds)
    records = load_frame_records(manifest, clamp=config.clamp)
    sums = {k: 0.0 for k in k_values}
    for fold in folds.folds:
        train_recs, test_recs = _split_records(records, fold)
        if not train_recs or not test_recs:
            raise DataError("every ablation fold needs both training and held-out frames")
        profile = config.profile
        if profile is None:
            profile = fold_engagement_profile(manifest, [r.entry for r in train_recs])
        if config.method == "aue":
            profile = _unit_weight_profile(profile)
        train_pairs = [(r.au, r.entry.label) for r in train_recs]
        test_pairs = [(r.au, r.entry.label) for r in test_recs]
        for k in k_values:
            _, history = train(train_pairs, test_pairs, profile, k, config.train_config)
            sums[k] += min(history.val_loss)
    losses = {k: sums[k] / len(folds.folds) for k in k_values}
    best_k = min(k_values, key=lambda k: (losses[k], k))
    return AblationResult(losses=losses, best_k=best_k)


# ---------------------------------------------------------------------------
# Report export

_COLUMNS = ("WA(%)", "UA(%)", "Precision(%)", "Recall(%)", "F1")


def format_report_table(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Fixed-width table, one row per method, matching the usual
    WA / UA / precision / recall / F1 column order."""
    header = f"{'Method':<16}" + "".join(f"{c:>14}" for c in _COLUMNS)
    lines = [header]
    for name, r in rows:
        cells = (
            f"{100 * r.weighted_accuracy:.1f}",
            f"{100 * r.unweighted_accuracy:.1f}",
            f"{100 * r.weighted_precision:.1f}",
            f"{100 * r.weighted_recall:.1f}",
            f"{r.weighted_f1:.3f}",
        )
        lines.append(f"{name:<16}" + "".join(f"{c:>14}" for c in cells))
    return "\n".join(lines) + "\n"


def write_report_kv(result: CrossValidationResult, stream: IO[str]) -> None:
    """Machine-readable variant: one `key value` line per metric."""
    for i, report in enumerate(result.fold_reports):
        for key, value in report.as_dict().items():
            stream.write(f"fold{i}.{key} {float(value)!r}\n")
    for key, value in result.mean_report.as_dict().items():
        stream.write(f"mean.{key} {float(value)!r}\n")


# Published reference results for this family of methods on the YouTube
# Immunization, iCOPEVid, and YouTube Blood Test corpora. Those datasets are
# not redistributable, so the numbers are documentation, not regression
# targets; rows are (WA%, UA%, precision%, recall%, F1).
REFERENCE_RESULTS: dict[str, dict[str, tuple[float, float, float, float, float]]] = {
    "youtube-immunization": {
        "pspi": (68.7, 67.9, 68.7, 68.7, 0.684),
        "resnet18": (79.9, 53.2, 75.2, 79.9, 0.765),
        "resnet34": (77.7, 48.7, 69.4, 77.7, 0.731),
        "vgg11bn": (77.2, 49.0, 66.5, 77.2, 0.707),
        "vgg16bn": (77.1, 55.0, 69.2, 77.1, 0.704),
        "vgg19bn": (78.8, 48.7, 78.1, 78.8, 0.707),
        "12-au": (81.9, 83.1, 83.8, 81.9, 0.821),
        "7-au": (85.3, 85.5, 86.2, 85.3, 0.853),
        "7-au-weighted": (90.3, 90.3, 91.2, 90.3, 0.902),
    },
    "icopevid": {
        "pspi": (48.9, 56.3, 65.4, 48.9, 0.501),
        "resnet18": (65.7, 72.3, 78.5, 65.7, 0.671),
        "resnet34": (62.9, 72.3, 80.7, 62.9, 0.640),
        "vgg11bn": (65.7, 71.8, 77.8, 65.7, 0.672),
        "vgg16bn": (63.9, 68.9, 75.1, 63.9, 0.655),
        "vgg19bn": (59.1, 65.8, 73.5, 59.1, 0.606),
        "aue-weighted": (67.4, 72.3, 77.7, 67.4, 0.689),
    },
    "youtube-blood-test": {
        "pspi": (68.3, 64.2, 70.1, 68.3, 0.655),
        "resnet18": (67.0, 70.4, 76.0, 67.0, 0.660),
        "resnet34": (72.8, 71.5, 72.6, 72.8, 0.726),
        "vgg11bn": (71.3, 74.6, 80.0, 71.3, 0.706),
        "vgg16bn": (74.4, 72.5, 74.4, 74.4, 0.739),
        "vgg19bn": (69.5, 73.6, 82.3, 69.5, 0.681),
        "aue-weighted": (76.4, 75.6, 76.3, 76.4, 0.763),
    },
}
