"""Exporter contract: toy fine-tuning, Grad-CAM output, and bundle files
that hold up under the downstream toolkit's parsers."""

from __future__ import annotations

import numpy as np
import pytest
import torch

import aupain
from aupain_export.cli import run
from aupain_export.export import export_cams
from aupain_export.formats import ManifestRow, read_manifest, write_cam1_atomic
from aupain_export.gradcam import GradCam, last_conv_layer
from aupain_export.model import (
    FinetuneConfig,
    FrameImageDataset,
    build_classifier,
    finetune,
    load_checkpoint,
    save_checkpoint,
)

from toydata import IMAGE_SIZE


def toy_frame_dataset(toy_dataset) -> FrameImageDataset:
    paths = [toy_dataset["images"] / f"{fid}.png" for fid in toy_dataset["frame_ids"]]
    return FrameImageDataset(paths, toy_dataset["levels"], IMAGE_SIZE)


@pytest.fixture(scope="session")
def trained(toy_dataset):
    config = FinetuneConfig(epochs=25, seed=7, image_size=IMAGE_SIZE)
    result = finetune(toy_frame_dataset(toy_dataset), 2, config)
    return result, config


@pytest.fixture(scope="session")
def bundle(toy_dataset, trained, tmp_path_factory):
    result, _ = trained
    out_dir = tmp_path_factory.mktemp("bundle")
    return export_cams(
        result.model,
        toy_dataset["manifest"],
        toy_dataset["images"],
        out_dir,
        image_size=IMAGE_SIZE,
    )


class TestFinetune:
    def test_toy_accuracy_exceeds_90_percent(self, trained):
        result, config = trained
        assert config.epochs == 25
        assert max(result.train_accuracy) > 0.9
        assert result.best_accuracy > 0.9

    def test_seeded_determinism(self, toy_dataset):
        config = FinetuneConfig(epochs=2, seed=123, image_size=IMAGE_SIZE)
        a = finetune(toy_frame_dataset(toy_dataset), 2, config)
        b = finetune(toy_frame_dataset(toy_dataset), 2, config)
        assert a.train_accuracy == b.train_accuracy
        assert a.eval_accuracy == b.eval_accuracy

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            finetune(FrameImageDataset([], [], IMAGE_SIZE), 2, FinetuneConfig(epochs=1))

    def test_classifier_head_size(self):
        model = build_classifier(4)
        assert model.fc.out_features == 4

    def test_checkpoint_round_trip(self, trained, tmp_path):
        result, config = trained
        save_checkpoint(result, 2, config, tmp_path / "m.pt")
        model, payload = load_checkpoint(tmp_path / "m.pt")
        assert payload["num_classes"] == 2
        assert payload["image_size"] == IMAGE_SIZE
        x = torch.zeros(1, 3, IMAGE_SIZE, IMAGE_SIZE)
        with torch.no_grad():
            assert torch.allclose(model(x), result.model(x))


class TestGradCam:
    def test_last_conv_layer_is_in_final_block(self):
        model = build_classifier(2)
        layer = last_conv_layer(model)
        assert layer is model.layer4[-1].conv2

    def test_constant_image_yields_finite_map(self):
        model = build_classifier(2)
        with GradCam(model) as cam:
            grid, cls = cam.compute(torch.zeros(3, IMAGE_SIZE, IMAGE_SIZE), out_size=224)
        assert grid.shape == (224, 224)
        assert np.all(np.isfinite(grid))
        assert 0.0 <= grid.min() and grid.max() <= 1.0
        assert cls in (0, 1)

    def test_true_class_target(self):
        model = build_classifier(2)
        with GradCam(model) as cam:
            _, cls = cam.compute(torch.randn(3, IMAGE_SIZE, IMAGE_SIZE), target_class=1)
        assert cls == 1


class TestExportBundle:
    def test_cams_parse_through_primary_loader(self, bundle):
        assert not bundle.failed_frames
        manifest = aupain.load_manifest(bundle.manifest_path)
        assert len(manifest.entries) == 32
        for entry in manifest.entries:
            assert entry.cam_path is not None
            amap = aupain.load_activation_map(manifest.resolve(entry.cam_path))
            assert (amap.width, amap.height) == (224, 224)
            assert amap.cells.min() >= 0.0 and amap.cells.max() <= 1.0
            # Min-max normalized: both ends attained unless the map is flat.
            if amap.cells.max() > 0.0:
                assert amap.cells.min() == 0.0 and amap.cells.max() == 1.0

    def test_correct_flags_match_prediction_log(self, bundle):
        manifest = aupain.load_manifest(bundle.manifest_path)
        flags = {e.frame_id: e.correctly_classified for e in manifest.entries}
        log_lines = [
            line.split()
            for line in bundle.prediction_log_path.read_text().splitlines()
            if not line.startswith("#")
        ]
        assert len(log_lines) == 32
        for frame_id, predicted, true_level in log_lines:
            assert flags[frame_id] == (int(predicted) == int(true_level))

    def test_prediction_log_matches_bundle(self, bundle):
        by_id = {p.frame_id: p for p in bundle.predictions}
        assert len(by_id) == 32
        trained_flags = [p.predicted == p.true_level for p in bundle.predictions]
        assert sum(trained_flags) >= 29  # >90% accurate classifier

    def test_missing_image_is_skipped_not_fatal(self, toy_dataset, trained, tmp_path):
        result, _ = trained
        rows = read_manifest(toy_dataset["manifest"])
        ghost = ManifestRow(
            frame_id="ghost",
            subject_id="s0",
            label=0.0,
            scheme="BINARY",
            au_path="au.csv",
            landmark_path="landmarks.csv",
        )
        broken_manifest = tmp_path / "broken.txt"
        from aupain_export.formats import write_manifest

        write_manifest(rows[:2] + [ghost], broken_manifest)
        (tmp_path / "au.csv").write_text((toy_dataset["root"] / "au.csv").read_text())
        (tmp_path / "landmarks.csv").write_text((toy_dataset["root"] / "landmarks.csv").read_text())
        out = tmp_path / "out"
        bundle = export_cams(
            result.model, broken_manifest, toy_dataset["images"], out, image_size=IMAGE_SIZE
        )
        assert bundle.failed_frames == ["ghost"]
        assert len(bundle.predictions) == 2
        exported = read_manifest(bundle.manifest_path)
        assert exported[2].cam_path is None


class TestFormats:
    def test_cam1_writer_rejects_bad_values(self, tmp_path):
        with pytest.raises(Exception):
            write_cam1_atomic(np.full((4, 4), 2.0), tmp_path / "bad.cam")

    def test_cam1_atomic_write_round_trips(self, tmp_path):
        rng = np.random.default_rng(3)
        grid = rng.uniform(0, 1, size=(16, 16))
        write_cam1_atomic(grid, tmp_path / "a.cam")
        amap = aupain.load_activation_map(tmp_path / "a.cam")
        assert np.allclose(amap.cells, grid, atol=1e-7)
        assert not list(tmp_path.glob("*.tmp"))


class TestCli:
    def test_finetune_then_export(self, toy_dataset, tmp_path):
        checkpoint = tmp_path / "model.pt"
        code = run(
            ["finetune", "--manifest", str(toy_dataset["manifest"]), "--images",
             str(toy_dataset["images"]), "--epochs", "2", "--seed", "1",
             "--image-size", str(IMAGE_SIZE), "--out", str(checkpoint)]
        )
        assert code == 0 and checkpoint.exists()
        out_dir = tmp_path / "bundle"
        code = run(
            ["export", "--manifest", str(toy_dataset["manifest"]), "--images",
             str(toy_dataset["images"]), "--model", str(checkpoint),
             "--out-dir", str(out_dir)]
        )
        assert code == 0
        assert (out_dir / "manifest.txt").exists()
        assert len(list((out_dir / "cams").glob("*.cam"))) == 32

    def test_usage_error(self):
        assert run(["finetune", "--manifest", "x"]) == 2

    def test_missing_manifest(self, tmp_path):
        assert run(
            ["finetune", "--manifest", str(tmp_path / "nope.txt"), "--images", str(tmp_path),
             "--seed", "1", "--out", str(tmp_path / "m.pt")]
        ) == 3
