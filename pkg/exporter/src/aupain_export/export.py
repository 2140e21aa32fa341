"""Batch export: run the classifier over manifest frames, write one CAM1
file per frame, and fill the manifest's cam_path and correct_flag
columns."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .formats import ManifestRow, read_manifest, updated_rows, write_cam1_atomic, write_manifest
from .gradcam import GradCam
from .model import FrameImageDataset

logger = logging.getLogger(__name__)


@dataclass
class PredictionEntry:
    frame_id: str
    predicted: int
    true_level: int


@dataclass
class ExportBundle:
    manifest_path: Path
    cam_dir: Path
    predictions: list[PredictionEntry] = field(default_factory=list)
    failed_frames: list[str] = field(default_factory=list)

    @property
    def prediction_log_path(self) -> Path:
        return self.manifest_path.parent / "predictions.txt"


def export_cams(
    model: nn.Module,
    manifest_path: str | Path,
    images_dir: str | Path,
    out_dir: str | Path,
    target_class: str = "predicted",
    image_size: int = 224,
    out_size: int = 224,
) -> ExportBundle:
    """Produce CAM1 files plus an updated manifest and prediction log.

    `target_class` selects whose activation is localized: the model's
    predicted level (default) or the frame's true level. Per-frame I/O
    failures are logged and skipped; the batch continues.
    """
    manifest_path = Path(manifest_path)
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    if target_class not in ("predicted", "true"):
        raise ValueError(f"target_class must be 'predicted' or 'true', got {target_class!r}")
    rows = read_manifest(manifest_path)
    cam_dir = out_dir / "cams"
    cam_dir.mkdir(parents=True, exist_ok=True)
    bundle = ExportBundle(manifest_path=out_dir / "manifest.txt", cam_dir=cam_dir)
    cam_paths: dict[str, str] = {}
    correct: dict[str, bool] = {}
    with GradCam(model) as cam:
        for row in rows:
            try:
                image_path = images_dir / f"{row.frame_id}.png"
                dataset = FrameImageDataset([image_path], [row.level()], image_size)
                tensor, true_level = dataset[0]
                wanted = None if target_class == "predicted" else true_level
                with torch.enable_grad():
                    grid, used_class = cam.compute(tensor, wanted, out_size)
                predicted = used_class if target_class == "predicted" else _predict(model, tensor)
                cam_file = cam_dir / f"{row.frame_id}.cam"
                write_cam1_atomic(grid, cam_file)
                cam_paths[row.frame_id] = str(cam_file.relative_to(out_dir))
                correct[row.frame_id] = predicted == true_level
                bundle.predictions.append(PredictionEntry(row.frame_id, predicted, true_level))
            except (OSError, ValueError) as exc:
                logger.error("frame %s failed: %s", row.frame_id, exc)
                bundle.failed_frames.append(row.frame_id)
    _rewrite_manifest(rows, cam_paths, correct, manifest_path, bundle.manifest_path)
    _write_prediction_log(bundle)
    return bundle


@torch.no_grad()
def _predict(model: nn.Module, tensor: torch.Tensor) -> int:
    model.eval()
    return int(model(tensor.unsqueeze(0)).argmax(dim=1))


def _rewrite_manifest(
    rows: list[ManifestRow],
    cam_paths: dict[str, str],
    correct: dict[str, bool],
    source: Path,
    target: Path,
) -> None:
    # Data paths in the source manifest are relative to its directory;
    # re-anchor them so the exported manifest still resolves.
    rebased = []
    for row in rows:
        au = source.parent / row.au_path
        lm = source.parent / row.landmark_path
        rebased.append(
            ManifestRow(
                frame_id=row.frame_id,
                subject_id=row.subject_id,
                label=row.label,
                scheme=row.scheme,
                au_path=str(au.resolve()),
                landmark_path=str(lm.resolve()),
                cam_path=row.cam_path,
                correct_flag=row.correct_flag,
            )
        )
    write_manifest(updated_rows(rebased, cam_paths, correct), target)


def _write_prediction_log(bundle: ExportBundle) -> None:
    with open(bundle.prediction_log_path, "w", encoding="utf-8") as fh:
        fh.write("# frame_id predicted_level true_level\n")
        for entry in bundle.predictions:
            fh.write(f"{entry.frame_id} {entry.predicted} {entry.true_level}\n")
