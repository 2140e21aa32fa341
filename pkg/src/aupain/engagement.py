"""AU engagement levels: mean activation over landmark-anchored 10x10
regions, aggregated over correctly classified frames, normalized and
ranked so the top-engaged AUs can be selected for regression.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Mapping

from .core import AU_IDS, ActivationMap, DataError, FaceLandmarks
from .geometry import REGION_AREA, RegionRect, au_center, au_region, scale_to_map


@dataclass(frozen=True)
class EngagementProfile:
    """Per-AU engagement: raw means, max-normalized values, and ranking."""

    raw: Mapping[int, float]
    normalized: Mapping[int, float]
    ranking: tuple[int, ...]
    frame_count: int

    @classmethod
    def from_raw(cls, raw: Mapping[int, float], frame_count: int) -> "EngagementProfile":
        missing = [au for au in AU_IDS if au not in raw]
        if missing:
            raise DataError(f"engagement profile missing AUs {missing}")
        peak = max(raw.values())
        if peak > 0.0:
            normalized = {au: raw[au] / peak for au in AU_IDS}
        else:
            normalized = {au: 0.0 for au in AU_IDS}
        ranking = tuple(sorted(AU_IDS, key=lambda au: (-raw[au], au)))
        return cls(raw=dict(raw), normalized=normalized, ranking=ranking, frame_count=frame_count)


def region_mean(amap: ActivationMap, region: RegionRect) -> float:
    """Arithmetic mean of the activation cells inside the region."""
    block = amap.cells[region.y_top : region.y_bottom, region.x_left : region.x_right]
    return float(block.sum() / REGION_AREA)


def frame_engagement(amap: ActivationMap, landmarks: FaceLandmarks, au: int) -> float:
    """Single-frame engagement of one AU.

    Midline AUs use the mean over their one region; bilateral AUs average
    the left and right region means. Centers found in landmark pixel space
    are rescaled into the map grid before region placement.
    """
    center = au_center(landmarks, au)
    img_dims = (landmarks.image_width, landmarks.image_height)
    map_dims = (amap.width, amap.height)
    means = []
    for pt in center.points:
        scaled = scale_to_map(pt, img_dims, map_dims)
        means.append(region_mean(amap, au_region(scaled, map_dims)))
    return float(sum(means) / len(means))


def aggregate_engagement(
    frames: Iterable[tuple[ActivationMap, FaceLandmarks]],
    keep: Iterable[bool] | None = None,
) -> EngagementProfile:
    """Mean per-AU engagement over the frames whose `keep` flag is true.

    `keep` carries the correct-classification filter; None keeps every
    frame. Frames are consumed as a stream, one activation map at a time.
    """
    totals = {au: 0.0 for au in AU_IDS}
    count = 0
    flags = iter(keep) if keep is not None else None
    for amap, landmarks in frames:
        if flags is not None and not next(flags):
            continue
        for au in AU_IDS:
            totals[au] += frame_engagement(amap, landmarks, au)
        count += 1
    if count == 0:
        raise DataError("no frame passed the correct-classification filter")
    raw = {au: totals[au] / count for au in AU_IDS}
    return EngagementProfile.from_raw(raw, frame_count=count)


def top_k(profile: EngagementProfile, k: int) -> tuple[int, ...]:
    """The k most-engaged AUs, in ranking order."""
    if not 1 <= k <= len(AU_IDS):
        raise DataError(f"k must be in [1, {len(AU_IDS)}], got {k}")
    return profile.ranking[:k]


def write_profile(profile: EngagementProfile, stream: IO[str]) -> None:
    """One `au_id raw normalized rank` line per AU, sorted by rank."""
    stream.write(f"# au engagement profile, frames {profile.frame_count}\n")
    for rank, au in enumerate(profile.ranking, start=1):
        stream.write(f"{au} {float(profile.raw[au])!r} {float(profile.normalized[au])!r} {rank}\n")


def read_profile(stream: IO[str]) -> EngagementProfile:
    raw: dict[int, float] = {}
    frame_count = 0
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            tokens = text.split()
            if "frames" in tokens:
                frame_count = int(tokens[tokens.index("frames") + 1])
            continue
        parts = text.split()
        if len(parts) != 4:
            raise DataError(f"profile line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            au = int(parts[0])
            value = float(parts[1])
        except ValueError as exc:
            raise DataError(f"profile line {lineno}: {exc}") from None
        if au not in AU_IDS:
            raise DataError(f"profile line {lineno}: unknown AU{au}")
        if au in raw:
            raise DataError(f"profile line {lineno}: duplicate AU{au}")
        raw[au] = value
    return EngagementProfile.from_raw(raw, frame_count=frame_count)
