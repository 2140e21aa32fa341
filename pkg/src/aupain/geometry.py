"""AU-center rules for infant faces and 10x10 AU-region placement.

Centers come from 68-point landmarks (iBUG ordering). Offsets are measured
in units of the inter-ocular scale, the distance between the two eye
centers, and move along the image y axis (up = decreasing y).

Anchor indices:
    inner brows 21/22, outer brows 17/26, brow centers 19/24,
    eye contours 36-41 (left) and 42-47 (right),
    lower lids (40,41)/(46,47), nose alae 31/35,
    upper-lip center 51, lip corners 48/54,
    inner-lip top/bottom 62/66, mouth ring 48-67.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BILATERAL_AUS, MIDLINE_AUS, DataError, FaceLandmarks

REGION_SIZE = 10
REGION_AREA = REGION_SIZE * REGION_SIZE

LEFT_EYE_IDX = tuple(range(36, 42))
RIGHT_EYE_IDX = tuple(range(42, 48))
MOUTH_IDX = tuple(range(48, 68))

Point = tuple[float, float]


@dataclass(frozen=True)
class AUCenter:
    """Center point(s) of one AU-related region; two points for bilateral AUs."""

    au: int
    points: tuple[Point, ...]

    def __post_init__(self) -> None:
        want = 2 if self.au in BILATERAL_AUS else 1
        if self.au not in BILATERAL_AUS and self.au not in MIDLINE_AUS:
            raise DataError(f"AU{self.au} is not in the 12-AU pain universe")
        if len(self.points) != want:
            raise DataError(f"AU{self.au} requires {want} center point(s), got {len(self.points)}")


@dataclass(frozen=True)
class RegionRect:
    """Axis-aligned 10x10 pixel region, half-open on the right and bottom."""

    x_left: int
    x_right: int
    y_top: int
    y_bottom: int

    def __post_init__(self) -> None:
        if self.x_right - self.x_left != REGION_SIZE or self.y_bottom - self.y_top != REGION_SIZE:
            raise DataError(f"region must be {REGION_SIZE}x{REGION_SIZE}, got {self}")

    @property
    def area(self) -> int:
        return (self.x_right - self.x_left) * (self.y_bottom - self.y_top)


def eye_centers(landmarks: FaceLandmarks) -> tuple[Point, Point]:
    """Left and right eye centers: centroids of the 6-point eye contours."""
    pts = landmarks.points
    left = pts[list(LEFT_EYE_IDX)].mean(axis=0)
    right = pts[list(RIGHT_EYE_IDX)].mean(axis=0)
    return (float(left[0]), float(left[1])), (float(right[0]), float(right[1]))


def interocular_scale(landmarks: FaceLandmarks) -> float:
    """Distance between the two eye centers; errors below 1 pixel."""
    (lx, ly), (rx, ry) = eye_centers(landmarks)
    dist = math.hypot(rx - lx, ry - ly)
    if dist < 1.0:
        raise DataError(f"degenerate face: inter-ocular distance {dist:.3g} < 1 pixel")
    return dist


def _point(pts: np.ndarray, idx: int, dy: float = 0.0) -> Point:
    return (float(pts[idx, 0]), float(pts[idx, 1] + dy))


def _midpoint(pts: np.ndarray, i: int, j: int, dy: float = 0.0) -> Point:
    x = (pts[i, 0] + pts[j, 0]) / 2.0
    y = (pts[i, 1] + pts[j, 1]) / 2.0
    return (float(x), float(y + dy))


def au_center(landmarks: FaceLandmarks, au: int) -> AUCenter:
    """Locate the AU's center point(s) from landmarks.

    Offset rules (fractions of the inter-ocular scale, negative dy = up):
    AU1 half a scale above the inner brows; AU2 a third above the outer
    brows; AU4 a third below the brow centers; AU6 one scale below the
    eye bottoms; AU7 and AU43 at the eye centers; AU9 at the nose alae;
    AU10 at the upper-lip center; AU12 at the lip corners; AU20 one scale
    below the lip corners; AU25 at the inner-lip center; AU27 at the
    mouth-ring centroid.
    """
    pts = landmarks.points
    if au in (7, 43):
        return AUCenter(au, eye_centers(landmarks))
    if au == 9:
        return AUCenter(au, (_point(pts, 31), _point(pts, 35)))
    if au == 10:
        return AUCenter(au, (_point(pts, 51),))
    if au == 12:
        return AUCenter(au, (_point(pts, 48), _point(pts, 54)))
    if au == 25:
        return AUCenter(au, (_midpoint(pts, 62, 66),))
    if au == 27:
        mouth = pts[list(MOUTH_IDX)].mean(axis=0)
        return AUCenter(au, ((float(mouth[0]), float(mouth[1])),))

    scale = interocular_scale(landmarks)
    if au == 1:
        dy = -scale / 2.0
        return AUCenter(au, (_point(pts, 21, dy), _point(pts, 22, dy)))
    if au == 2:
        dy = -scale / 3.0
        return AUCenter(au, (_point(pts, 17, dy), _point(pts, 26, dy)))
    if au == 4:
        dy = scale / 3.0
        return AUCenter(au, (_point(pts, 19, dy), _point(pts, 24, dy)))
    if au == 6:
        return AUCenter(au, (_midpoint(pts, 40, 41, scale), _midpoint(pts, 46, 47, scale)))
    if au == 20:
        return AUCenter(au, (_point(pts, 48, scale), _point(pts, 54, scale)))
    raise DataError(f"AU{au} is not in the 12-AU pain universe")


def _clamp_span(lo: int, size: int, limit: int) -> tuple[int, int]:
    # Translate (never shrink) so the span fits in [0, limit).
    if lo < 0:
        lo = 0
    elif lo + size > limit:
        lo = limit - size
    return lo, lo + size


def au_region(center: Point, map_dims: tuple[int, int]) -> RegionRect:
    """10x10 region around the rounded center, translated to fit the map.

    `map_dims` is (width, height). The nominal span is
    [cx-5, cx+5) x [cy-5, cy+5); spans overflowing the map edge slide
    inward so the area stays exactly 100.
    """
    width, height = map_dims
    if width < REGION_SIZE or height < REGION_SIZE:
        raise DataError(f"map {width}x{height} smaller than {REGION_SIZE}x{REGION_SIZE}")
    cx = math.floor(center[0] + 0.5)
    cy = math.floor(center[1] + 0.5)
    half = REGION_SIZE // 2
    x_left, x_right = _clamp_span(cx - half, REGION_SIZE, width)
    y_top, y_bottom = _clamp_span(cy - half, REGION_SIZE, height)
    return RegionRect(x_left, x_right, y_top, y_bottom)


def scale_to_map(center: Point, image_dims: tuple[int, int], map_dims: tuple[int, int]) -> Point:
    """Rescale a point from image pixel space to map grid space, per axis."""
    iw, ih = image_dims
    mw, mh = map_dims
    if iw <= 0 or ih <= 0 or mw <= 0 or mh <= 0:
        raise DataError("dimensions must be positive")
    return (center[0] * mw / iw, center[1] * mh / ih)
