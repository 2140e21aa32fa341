"""The PSPI pain score and its calibrated mapping onto discrete levels.

PSPI sums brow lowering, the stronger of cheek raise / lid tighten, the
stronger of nose wrinkle / upper-lip raise, and an eye-closure term. The
eye-closure term is either an occurrence bit (classic 0-16 range) or the
raw closure intensity (0-20 range).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import AUIntensityVector, DataError, PainLevel


class EyeMode(Enum):
    BINARY_EYE = "binary"
    INTENSITY_EYE = "intensity"

    @classmethod
    def parse(cls, text: str) -> "EyeMode":
        for mode in cls:
            if text.strip().lower() in (mode.value, mode.name.lower()):
                return mode
        raise DataError(f"unknown eye mode {text!r}")


@dataclass(frozen=True)
class PSPIScore:
    value: float
    mode: EyeMode


@dataclass(frozen=True)
class ThresholdSet:
    """Ascending cut points partitioning the PSPI range into pain levels."""

    cut_points: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.cut_points, self.cut_points[1:])):
            raise DataError(f"cut points must be strictly ascending, got {self.cut_points}")


def pspi(v: AUIntensityVector, mode: EyeMode = EyeMode.BINARY_EYE) -> PSPIScore:
    """Score one AU intensity vector.

    BINARY_EYE counts eye closure as 1 when its intensity reaches 1.0;
    INTENSITY_EYE adds the closure intensity itself.
    """
    eye = (1.0 if v[43] >= 1.0 else 0.0) if mode is EyeMode.BINARY_EYE else v[43]
    value = v[4] + max(v[6], v[7]) + max(v[9], v[10]) + eye
    return PSPIScore(value=float(value), mode=mode)


def calibrate_thresholds(scores: Sequence[float], labels: Sequence[PainLevel]) -> ThresholdSet:
    """Place cut points at label-frequency quantiles of the score sample.

    With L distinct-level labels the L-1 cuts sit midway between the
    scores straddling each cumulative label-count boundary, so predicted
    level proportions match the training label proportions.
    """
    if len(scores) != len(labels):
        raise DataError(f"{len(scores)} scores vs {len(labels)} labels")
    if not scores:
        raise DataError("cannot calibrate on an empty sample")
    indices = [lvl.index for lvl in labels]
    num_levels = max(indices) + 1
    if len(set(indices)) < 2:
        raise DataError("calibration needs at least 2 distinct labels")
    counts = [0] * num_levels
    for idx in indices:
        counts[idx] += 1
    ordered = sorted(scores)
    cuts: list[float] = []
    boundary = 0
    for level in range(num_levels - 1):
        boundary += counts[level]
        cut = (ordered[boundary - 1] + ordered[boundary]) / 2.0
        # Empty classes collapse adjacent quantiles; nudge to keep the
        # cut list strictly ascending.
        if cuts and cut <= cuts[-1]:
            cut = math.nextafter(cuts[-1], math.inf)
        cuts.append(cut)
    return ThresholdSet(cut_points=tuple(cuts))


def pspi_classify(score: PSPIScore, thresholds: ThresholdSet, names: Sequence[str] | None = None) -> PainLevel:
    """Level = number of cut points at or below the score (cuts inclusive)."""
    idx = bisect_right(list(thresholds.cut_points), score.value)
    name = names[idx] if names is not None else f"level {idx}"
    return PainLevel(index=idx, name=name)
