"""Dataset ingestion: manifests, AU-intensity and landmark tables,
activation-map files, pain-level binning, and subject-disjoint folds.

File formats (all plain text except CAM1):

* Manifest: one record per line,
  ``frame_id|subject_id|label|scheme|au_path|landmark_path|cam_path|correct_flag``;
  ``cam_path`` and ``correct_flag`` may be empty, ``#`` starts a comment.
  Relative paths resolve against the manifest's directory.
* AU table: CSV with a header row, keyed by a ``frame_id`` column.
* Landmark table: CSV header ``frame_id,x0,y0,...,x67,y67,img_w,img_h``.
* CAM1: magic ``CAM1``, u32-LE width, u32-LE height, then width*height
  f32-LE values in [0, 1], row-major. Binary PGM (``P5``, maxval 255) is
  accepted as an alternative; pixel values are divided by 255.
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np

from .core import (
    AU_IDS,
    INTENSITY_MAX,
    INTENSITY_MIN,
    ActivationMap,
    AUIntensityVector,
    DataError,
    FaceLandmarks,
    LabelScheme,
    NUM_LANDMARKS,
    PainLevel,
    level_names,
)

logger = logging.getLogger(__name__)

CAM1_MAGIC = b"CAM1"

# Column aliases recognized by the default AU mapping: plain ids, zero-padded
# ids, and OpenFace-style intensity columns.
_DEFAULT_ALIASES: dict[int, tuple[str, ...]] = {
    au: (f"AU{au}", f"AU{au:02d}", f"AU{au:02d}_r", f"AU{au}_r") for au in AU_IDS
}


@dataclass(frozen=True)
class FrameEntry:
    """One manifest record."""

    frame_id: str
    subject_id: str
    label: float
    scheme: LabelScheme
    au_path: str
    landmark_path: str
    cam_path: str | None = None
    correctly_classified: bool | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[FrameEntry, ...]
    base_dir: Path = field(default_factory=Path, compare=False)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            if entry.frame_id in seen:
                raise DataError(f"duplicate frame_id {entry.frame_id!r} in manifest")
            seen.add(entry.frame_id)
            lo, hi = entry.scheme.score_range
            if not (lo <= entry.label <= hi):
                raise DataError(
                    f"frame {entry.frame_id!r}: label {entry.label} outside "
                    f"[{lo}, {hi}] for scheme {entry.scheme.value}"
                )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({e.subject_id for e in self.entries}))


@dataclass(frozen=True)
class FoldSpec:
    """Pairwise-disjoint subject-id sets covering the whole subject pool."""

    folds: tuple[frozenset[str], ...]
    seed: int

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for i, fold in enumerate(self.folds):
            overlap = seen & fold
            if overlap:
                raise DataError(f"fold {i} repeats subjects {sorted(overlap)}")
            seen |= fold


def _parse_flag(text: str, lineno: int) -> bool | None:
    if text == "":
        return None
    if text in ("1", "true", "True"):
        return True
    if text in ("0", "false", "False"):
        return False
    raise DataError(f"manifest line {lineno}: bad correct_flag {text!r}")


def load_manifest(path: str | Path, check_paths: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    With `check_paths` every referenced AU, landmark, and CAM file must
    exist; dangling references fail eagerly with the offending line.
    """
    path = Path(path)
    base = path.parent
    entries: list[FrameEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split("|")
            if len(fields) != 8:
                raise DataError(f"manifest line {lineno}: expected 8 |-separated fields, got {len(fields)}")
            frame_id, subject_id, label_s, scheme_s, au_path, lm_path, cam_path, flag_s = (
                f.strip() for f in fields
            )
            if not frame_id or not subject_id:
                raise DataError(f"manifest line {lineno}: empty frame_id or subject_id")
            try:
                label = float(label_s)
            except ValueError:
                raise DataError(f"manifest line {lineno}: non-numeric label {label_s!r}") from None
            scheme = LabelScheme.parse(scheme_s)
            lo, hi = scheme.score_range
            if not (lo <= label <= hi):
                raise DataError(
                    f"manifest line {lineno}: label {label} outside [{lo}, {hi}] "
                    f"for scheme {scheme.value}"
                )
            if not au_path or not lm_path:
                raise DataError(f"manifest line {lineno}: au_path and landmark_path are required")
            entries.append(
                FrameEntry(
                    frame_id=frame_id,
                    subject_id=subject_id,
                    label=label,
                    scheme=scheme,
                    au_path=au_path,
                    landmark_path=lm_path,
                    cam_path=cam_path or None,
                    correctly_classified=_parse_flag(flag_s, lineno),
                )
            )
    manifest = DatasetManifest(entries=tuple(entries), base_dir=base)
    if check_paths:
        for entry in manifest.entries:
            for ref in (entry.au_path, entry.landmark_path, entry.cam_path):
                if ref and not manifest.resolve(ref).exists():
                    raise DataError(f"frame {entry.frame_id!r}: path {ref!r} does not resolve")
    return manifest


def write_manifest(manifest: DatasetManifest, stream: IO[str]) -> None:
    stream.write("# frame_id|subject_id|label|scheme|au_path|landmark_path|cam_path|correct_flag\n")
    for e in manifest.entries:
        flag = "" if e.correctly_classified is None else ("1" if e.correctly_classified else "0")
        stream.write(
            f"{e.frame_id}|{e.subject_id}|{float(e.label)!r}|{e.scheme.value}|"
            f"{e.au_path}|{e.landmark_path}|{e.cam_path or ''}|{flag}\n"
        )


def default_au_mapping(header: Sequence[str]) -> dict[int, str | None]:
    """Map each AU to a column name found in `header`, or None when absent.

    Recognizes plain (``AU27``), zero-padded (``AU04``), and OpenFace
    intensity (``AU04_r``) spellings.
    """
    columns = {name.strip(): name for name in header}
    mapping: dict[int, str | None] = {}
    for au in AU_IDS:
        mapping[au] = next((columns[a] for a in _DEFAULT_ALIASES[au] if a in columns), None)
    return mapping


def load_au_intensities(
    path: str | Path,
    mapping: Mapping[int, str | None] | None = None,
    clamp: bool = False,
) -> dict[str, AUIntensityVector]:
    """Load per-frame AU intensity vectors from a CSV table.

    `mapping` sends each AU id to its column name; a None value declares the
    AU absent from the detector output and zero-fills it (logged once). With
    `clamp` the values are clipped into [0, 5]; otherwise out-of-range cells
    are rejected.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty AU file")
        header = [name.strip() for name in reader.fieldnames]
        if "frame_id" not in header:
            raise DataError(f"{path}: AU file lacks a frame_id column")
        if mapping is None:
            mapping = default_au_mapping(header)
        filled = [au for au, col in mapping.items() if col is None]
        if filled:
            logger.warning("%s: zero-filling absent AU columns for AUs %s", path, filled)
        for au, col in mapping.items():
            if col is not None and col not in header:
                raise DataError(f"{path}: mapped column {col!r} for AU{au} not in header")
        missing = [au for au in AU_IDS if au not in mapping]
        if missing:
            raise DataError(f"AU mapping does not cover AUs {missing}")

        vectors: dict[str, AUIntensityVector] = {}
        for rowno, row in enumerate(reader, start=2):
            frame_id = (row.get("frame_id") or "").strip()
            if not frame_id:
                raise DataError(f"{path} row {rowno}: empty frame_id")
            if frame_id in vectors:
                raise DataError(f"{path} row {rowno}: duplicate frame_id {frame_id!r}")
            values: dict[int, float] = {}
            for au in AU_IDS:
                col = mapping[au]
                if col is None:
                    values[au] = 0.0
                    continue
                cell = (row.get(col) or "").strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path} row {rowno}: non-numeric {col}={cell!r}") from None
                if clamp:
                    v = min(max(v, INTENSITY_MIN), INTENSITY_MAX)
                elif not (INTENSITY_MIN <= v <= INTENSITY_MAX):
                    raise DataError(f"{path} row {rowno}: {col}={v} outside [0, 5]")
                values[au] = v
            vectors[frame_id] = AUIntensityVector(values)
    return vectors


def load_landmarks(path: str | Path) -> dict[str, FaceLandmarks]:
    """Load per-frame 68-point landmark sets from a CSV table."""
    path = Path(path)
    coord_cols = [f"{axis}{i}" for i in range(NUM_LANDMARKS) for axis in ("x", "y")]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty landmark file")
        header = set(name.strip() for name in reader.fieldnames)
        required = {"frame_id", "img_w", "img_h", *coord_cols}
        absent = sorted(required - header)
        if absent:
            raise DataError(f"{path}: landmark file missing columns {absent[:4]}...")
        out: dict[str, FaceLandmarks] = {}
        for rowno, row in enumerate(reader, start=2):
            frame_id = (row.get("frame_id") or "").strip()
            if not frame_id:
                raise DataError(f"{path} row {rowno}: empty frame_id")
            try:
                pts = np.array(
                    [[float(row[f"x{i}"]), float(row[f"y{i}"])] for i in range(NUM_LANDMARKS)]
                )
                w = int(row["img_w"])
                h = int(row["img_h"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path} row {rowno}: {exc}") from None
            out[frame_id] = FaceLandmarks(points=pts, image_width=w, image_height=h)
    return out


def _load_pgm(data: bytes, path: Path) -> ActivationMap:
    # Binary PGM: "P5", whitespace-separated width/height/maxval (with
    # optional # comments), a single whitespace byte, then raster bytes.
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise DataError(f"{path}: malformed PGM header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    expected = width * height
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise DataError(f"{path}: PGM raster truncated ({len(raster)} of {expected} bytes)")
    grid = np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(float) / 255.0
    return ActivationMap(cells=grid, source=str(path))


def load_activation_map(path: str | Path) -> ActivationMap:
    """Load a CAM1 or binary-PGM activation map with values in [0, 1]."""
    path = Path(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == CAM1_MAGIC:
        if len(data) < 12:
            raise DataError(f"{path}: CAM1 header truncated")
        width, height = struct.unpack_from("<II", data, 4)
        if width == 0 or height == 0:
            raise DataError(f"{path}: CAM1 declares empty {width}x{height} grid")
        expected = 12 + 4 * width * height
        if len(data) != expected:
            raise DataError(
                f"{path}: CAM1 payload is {len(data)} bytes, expected {expected} "
                f"for {width}x{height}"
            )
        grid = np.frombuffer(data, dtype="<f4", count=width * height, offset=12)
        grid = grid.astype(float).reshape(height, width)
        if not np.all(np.isfinite(grid)) or grid.min() < 0.0 or grid.max() > 1.0:
            raise DataError(f"{path}: CAM1 values outside [0, 1]")
        return ActivationMap(cells=grid, source=str(path))
    if data[:2] == b"P5":
        return _load_pgm(data, path)
    raise DataError(f"{path}: bad magic {data[:4]!r}, expected CAM1 or P5")


def write_cam1(cells: np.ndarray, path: str | Path) -> None:
    """Write a [0, 1] grid in CAM1 format (row-major f32-LE)."""
    grid = np.asarray(cells, dtype="<f4")
    if grid.ndim != 2:
        raise DataError(f"CAM1 grid must be 2-D, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)) or grid.min() < 0.0 or grid.max() > 1.0:
        raise DataError("CAM1 values must lie in [0, 1]")
    height, width = grid.shape
    with open(path, "wb") as fh:
        fh.write(CAM1_MAGIC)
        fh.write(struct.pack("<II", width, height))
        fh.write(grid.tobytes())


def bin_label(score: float, scheme: LabelScheme) -> PainLevel:
    """Map a raw pain score onto its scheme's discrete level.

    FLACC scores bin at 2.5-wide intervals; NFCS supports only the observed
    endpoint scores 0 and 4; BINARY passes 0/1 through.
    """
    lo, hi = scheme.score_range
    if not (lo <= score <= hi):
        raise DataError(f"score {score} outside [{lo}, {hi}] for scheme {scheme.value}")
    names = level_names(scheme)
    if scheme is LabelScheme.FLACC4:
        if score < 2.5:
            idx = 0
        elif score < 5.0:
            idx = 1
        elif score < 7.5:
            idx = 2
        else:
            idx = 3
    elif scheme is LabelScheme.NFCS2:
        if score == 0.0:
            idx = 0
        elif score == 4.0:
            idx = 1
        else:
            raise DataError(f"NFCS score {score} unsupported; only 0 and 4 occur")
    else:
        if score == 0.0:
            idx = 0
        elif score == 1.0:
            idx = 1
        else:
            raise DataError(f"BINARY label must be 0 or 1, got {score}")
    return PainLevel(index=idx, name=names[idx])


def subject_folds(manifest: DatasetManifest, fold_sizes: Sequence[int], seed: int) -> FoldSpec:
    """Split distinct subjects into disjoint folds of the requested sizes.

    Subjects are shuffled with a seeded generator and sliced in order, so
    the split is reproducible for a fixed seed.
    """
    subjects = list(manifest.subjects)
    if any(size <= 0 for size in fold_sizes):
        raise DataError(f"fold sizes must be positive, got {list(fold_sizes)}")
    if sum(fold_sizes) != len(subjects):
        raise DataError(
            f"fold sizes sum to {sum(fold_sizes)} but manifest has {len(subjects)} subjects"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(subjects))
    shuffled = [subjects[i] for i in order]
    folds: list[frozenset[str]] = []
    start = 0
    for size in fold_sizes:
        folds.append(frozenset(shuffled[start : start + size]))
        start += size
    return FoldSpec(folds=tuple(folds), seed=seed)


def write_folds(spec: FoldSpec, stream: IO[str]) -> None:
    stream.write(f"# subject folds, seed {spec.seed}\n")
    for i, fold in enumerate(spec.folds):
        stream.write(f"fold {i}: {','.join(sorted(fold))}\n")


def read_folds(stream: IO[str]) -> FoldSpec:
    seed = 0
    folds: list[frozenset[str]] = []
    for lineno, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            tokens = text.replace(",", " ").split()
            if "seed" in tokens:
                seed = int(tokens[tokens.index("seed") + 1])
            continue
        if not text.startswith("fold"):
            raise DataError(f"folds line {lineno}: expected 'fold <i>: ids'")
        _, _, ids = text.partition(":")
        members = [s.strip() for s in ids.split(",") if s.strip()]
        if not members:
            raise DataError(f"folds line {lineno}: empty fold")
        folds.append(frozenset(members))
    if not folds:
        raise DataError("folds file contains no folds")
    return FoldSpec(folds=tuple(folds), seed=seed)
