"""Activation-map exporter for the aupain toolkit: fine-tunes an image
classifier on labeled face crops and emits per-frame Grad-CAM grids as
CAM1 files with an updated manifest."""

from .export import ExportBundle, PredictionEntry, export_cams
from .formats import ManifestRow, read_manifest, write_cam1_atomic, write_manifest
from .gradcam import GradCam, last_conv_layer
from .model import (
    FinetuneConfig,
    FinetuneResult,
    FrameImageDataset,
    build_classifier,
    finetune,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"
