"""The downstream toolkit's file formats, written from this side of the
fence: the pipe-separated manifest and the CAM1 binary grid.

CAM1 layout: magic ``CAM1``, u32-LE width, u32-LE height, then
width*height f32-LE cells in [0, 1], row-major.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CAM1_MAGIC = b"CAM1"

FLACC_EDGES = (2.5, 5.0, 7.5)


class FormatError(Exception):
    pass


@dataclass(frozen=True)
class ManifestRow:
    frame_id: str
    subject_id: str
    label: float
    scheme: str
    au_path: str
    landmark_path: str
    cam_path: str | None = None
    correct_flag: bool | None = None

    def level(self) -> int:
        """Discrete pain level for classification targets."""
        if self.scheme == "FLACC4":
            return sum(1 for edge in FLACC_EDGES if self.label >= edge)
        if self.scheme == "NFCS2":
            if self.label == 0.0:
                return 0
            if self.label == 4.0:
                return 1
            raise FormatError(f"NFCS label must be 0 or 4, got {self.label}")
        if self.scheme == "BINARY":
            if self.label not in (0.0, 1.0):
                raise FormatError(f"binary label must be 0 or 1, got {self.label}")
            return int(self.label)
        raise FormatError(f"unknown scheme {self.scheme!r}")


def num_levels(scheme: str) -> int:
    return 4 if scheme == "FLACC4" else 2


def read_manifest(path: str | Path) -> list[ManifestRow]:
    rows: list[ManifestRow] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f.strip() for f in text.split("|")]
            if len(fields) != 8:
                raise FormatError(f"manifest line {lineno}: expected 8 fields, got {len(fields)}")
            flag: bool | None = None
            if fields[7]:
                flag = fields[7] in ("1", "true", "True")
            rows.append(
                ManifestRow(
                    frame_id=fields[0],
                    subject_id=fields[1],
                    label=float(fields[2]),
                    scheme=fields[3],
                    au_path=fields[4],
                    landmark_path=fields[5],
                    cam_path=fields[6] or None,
                    correct_flag=flag,
                )
            )
    return rows


def write_manifest(rows: list[ManifestRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# frame_id|subject_id|label|scheme|au_path|landmark_path|cam_path|correct_flag\n")
        for r in rows:
            flag = "" if r.correct_flag is None else ("1" if r.correct_flag else "0")
            fh.write(
                f"{r.frame_id}|{r.subject_id}|{float(r.label)!r}|{r.scheme}|"
                f"{r.au_path}|{r.landmark_path}|{r.cam_path or ''}|{flag}\n"
            )


def write_cam1_atomic(cells: np.ndarray, path: str | Path) -> None:
    """Write a CAM1 grid via a temp file and rename, so readers never see
    a partial file."""
    grid = np.ascontiguousarray(cells, dtype="<f4")
    if grid.ndim != 2:
        raise FormatError(f"CAM grid must be 2-D, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)) or grid.min() < 0.0 or grid.max() > 1.0:
        raise FormatError("CAM values must lie in [0, 1]")
    path = Path(path)
    height, width = grid.shape
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CAM1_MAGIC)
            fh.write(struct.pack("<II", width, height))
            fh.write(grid.tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def updated_rows(rows: list[ManifestRow], cam_paths: dict[str, str], correct: dict[str, bool]) -> list[ManifestRow]:
    out = []
    for r in rows:
        if r.frame_id in cam_paths:
            out.append(replace(r, cam_path=cam_paths[r.frame_id], correct_flag=correct[r.frame_id]))
        else:
            out.append(r)
    return out
