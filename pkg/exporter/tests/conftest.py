"""Session-scoped toy dataset fixture."""

from __future__ import annotations

import pytest
from PIL import Image

from toydata import toy_image, write_support_files


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory) -> dict:
    import numpy as np

    root = tmp_path_factory.mktemp("toy")
    images = root / "images"
    images.mkdir()
    rng = np.random.default_rng(400)
    frame_ids, levels = [], []
    for i in range(32):
        cls = i % 2
        fid = f"f{i:02d}"
        Image.fromarray(toy_image(rng, cls)).save(images / f"{fid}.png")
        frame_ids.append(fid)
        levels.append(cls)
    write_support_files(root, frame_ids)
    manifest = root / "manifest.txt"
    with open(manifest, "w") as fh:
        fh.write("# frame_id|subject_id|label|scheme|au_path|landmark_path|cam_path|correct_flag\n")
        for fid, cls in zip(frame_ids, levels):
            subject = f"s{int(fid[1:]) % 8}"
            fh.write(f"{fid}|{subject}|{float(cls)!r}|BINARY|au.csv|landmarks.csv||\n")
    return {
        "root": root,
        "images": images,
        "manifest": manifest,
        "frame_ids": frame_ids,
        "levels": levels,
    }
