"""Shared domain types: the 12-AU pain universe, AU intensity vectors,
68-point face landmarks, activation maps, pain levels, and error classes.

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

# The 12 pain-related action units handled by this toolkit.
AU_IDS: tuple[int, ...] = (1, 2, 4, 6, 7, 9, 10, 12, 20, 25, 27, 43)

# AUs anchored on both sides of the face (left and right center points)
# versus AUs with a single midline center.
BILATERAL_AUS: frozenset[int] = frozenset({1, 2, 4, 6, 7, 9, 12, 20, 43})
MIDLINE_AUS: frozenset[int] = frozenset({10, 25, 27})

AU_NAMES: dict[int, str] = {
    1: "Inner Brow Raiser",
    2: "Outer Brow Raiser",
    4: "Brow Lowerer",
    6: "Cheek Raiser",
    7: "Lid Tightener",
    9: "Nose Wrinkler",
    10: "Upper Lip Raiser",
    12: "Lip Corner Puller",
    20: "Lip Stretcher",
    25: "Lips Part",
    27: "Mouth Stretch",
    43: "Eye Closure",
}

INTENSITY_MIN = 0.0
INTENSITY_MAX = 5.0

NUM_LANDMARKS = 68


class AupainError(Exception):
    """Base class for all toolkit errors."""


class DataError(AupainError):
    """Malformed, out-of-range, or unresolvable input data."""


class TrainingError(AupainError):
    """Numeric or training failure (bad configuration, divergence, ...)."""


class LabelScheme(Enum):
    """Supported pain-label schemes and their closed score ranges."""

    FLACC4 = "FLACC4"
    NFCS2 = "NFCS2"
    BINARY = "BINARY"

    @property
    def score_range(self) -> tuple[float, float]:
        if self is LabelScheme.FLACC4:
            return (0.0, 10.0)
        if self is LabelScheme.NFCS2:
            return (0.0, 4.0)
        return (0.0, 1.0)

    @property
    def num_levels(self) -> int:
        return 4 if self is LabelScheme.FLACC4 else 2

    @classmethod
    def parse(cls, text: str) -> "LabelScheme":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise DataError(f"unknown label scheme {text!r}") from None


@dataclass(frozen=True)
class PainLevel:
    """A discrete pain level: index within a scheme plus a readable name."""

    index: int
    name: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise DataError(f"pain level index must be >= 0, got {self.index}")


FLACC_LEVEL_NAMES = ("No pain", "Weak pain", "Mid pain", "Strong pain")
TWO_LEVEL_NAMES = ("No pain", "Strong pain")


def level_names(scheme: LabelScheme) -> tuple[str, ...]:
    return FLACC_LEVEL_NAMES if scheme is LabelScheme.FLACC4 else TWO_LEVEL_NAMES


@dataclass(frozen=True)
class AUIntensityVector:
    """Per-frame intensities for the 12 pain-related AUs, each in [0, 5]."""

    values: Mapping[int, float]

    def __post_init__(self) -> None:
        missing = [au for au in AU_IDS if au not in self.values]
        if missing:
            raise DataError(f"AU intensity vector missing AUs {missing}")
        extra = [au for au in self.values if au not in AU_IDS]
        if extra:
            raise DataError(f"AU intensity vector has unknown AUs {extra}")
        for au, v in self.values.items():
            if not math.isfinite(v) or not (INTENSITY_MIN <= v <= INTENSITY_MAX):
                raise DataError(f"AU{au} intensity {v!r} outside [0, 5]")

    def __getitem__(self, au: int) -> float:
        return self.values[au]

    def subvector(self, aus: Iterable[int]) -> np.ndarray:
        """Intensities for the given AUs, in the given order."""
        return np.array([self.values[au] for au in aus], dtype=float)


@dataclass(frozen=True, eq=False)
class FaceLandmarks:
    """68 ordered (x, y) landmark points in face-crop pixel coordinates."""

    points: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise DataError(f"expected {NUM_LANDMARKS} landmark points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("landmark coordinates must be finite")
        if self.image_width <= 0 or self.image_height <= 0:
            raise DataError("landmark image dimensions must be positive")
        object.__setattr__(self, "points", pts)
        pts.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ActivationMap:
    """Dense saliency grid with cell values in [0, 1], row-major."""

    cells: np.ndarray
    source: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        grid = np.asarray(self.cells, dtype=float)
        if grid.ndim != 2 or grid.size == 0:
            raise DataError(f"activation map must be a non-empty 2-D grid, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise DataError("activation map contains non-finite values")
        lo, hi = float(grid.min()), float(grid.max())
        if lo < 0.0 or hi > 1.0:
            raise DataError(f"activation values outside [0, 1]: min {lo}, max {hi}")
        object.__setattr__(self, "cells", grid)
        grid.setflags(write=False)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]
