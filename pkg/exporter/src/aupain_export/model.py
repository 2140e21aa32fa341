"""Classifier fine-tuning on labeled face crops.

An 18-layer residual backbone (torchvision) gets its fully connected head
replaced by one sized to the pain-level count, then all parameters are
fine-tuned with Adam. The checkpoint with the best evaluation accuracy is
kept.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from PIL import Image
from torch.utils.data import DataLoader, Dataset
from torchvision import models

logger = logging.getLogger(__name__)

_ARCHS = {
    "resnet18": (models.resnet18, "IMAGENET1K_V1"),
    "resnet34": (models.resnet34, "IMAGENET1K_V1"),
}


@dataclass
class FinetuneConfig:
    epochs: int = 25
    learning_rate: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 8
    seed: int = 0
    arch: str = "resnet18"
    weights: str = "none"  # "imagenet" needs checkpoint download access
    image_size: int = 224


@dataclass
class FinetuneResult:
    model: nn.Module
    train_accuracy: list[float] = field(default_factory=list)
    eval_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_accuracy: float = 0.0


class FrameImageDataset(Dataset):
    """Face crops resized to a square tensor, labels as level indices."""

    def __init__(self, image_paths: list[Path], levels: list[int], image_size: int):
        assert len(image_paths) == len(levels)
        self.image_paths = image_paths
        self.levels = levels
        self.image_size = image_size

    def __len__(self) -> int:
        return len(self.image_paths)

    def __getitem__(self, idx: int):
        with Image.open(self.image_paths[idx]) as img:
            img = img.convert("RGB").resize((self.image_size, self.image_size), Image.BILINEAR)
        array = np.asarray(img, dtype=np.float32) / 255.0
        tensor = torch.from_numpy(array).permute(2, 0, 1)
        tensor = (tensor - 0.5) / 0.5
        return tensor, self.levels[idx]


def build_classifier(num_classes: int, arch: str = "resnet18", weights: str = "none") -> nn.Module:
    if arch not in _ARCHS:
        raise ValueError(f"unsupported arch {arch!r}, choose from {sorted(_ARCHS)}")
    ctor, weight_tag = _ARCHS[arch]
    model = ctor(weights=weight_tag if weights == "imagenet" else None)
    model.fc = nn.Linear(model.fc.in_features, num_classes)
    return model


@torch.no_grad()
def _accuracy(model: nn.Module, loader: DataLoader, device: torch.device) -> float:
    model.eval()
    correct = total = 0
    for images, labels in loader:
        logits = model(images.to(device))
        correct += int((logits.argmax(dim=1).cpu() == labels).sum())
        total += len(labels)
    return correct / total if total else 0.0


def finetune(
    dataset: FrameImageDataset,
    num_classes: int,
    config: FinetuneConfig,
    eval_dataset: FrameImageDataset | None = None,
) -> FinetuneResult:
    """Fine-tune a classifier; the best-accuracy checkpoint is retained.

    With no separate evaluation set the training set doubles as the
    checkpoint-selection set. Fully seeded: same seed, same data, same
    hardware give identical accuracy curves.
    """
    if len(dataset) == 0:
        raise ValueError("empty training dataset")
    torch.manual_seed(config.seed)
    device = torch.device("cpu")
    model = build_classifier(num_classes, config.arch, config.weights).to(device)
    generator = torch.Generator().manual_seed(config.seed)
    loader = DataLoader(
        dataset, batch_size=config.batch_size, shuffle=True, generator=generator, num_workers=0
    )
    eval_loader = DataLoader(
        eval_dataset if eval_dataset is not None else dataset,
        batch_size=config.batch_size,
        shuffle=False,
        num_workers=0,
    )
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    criterion = nn.CrossEntropyLoss()
    result = FinetuneResult(model=model)
    best_state = copy.deepcopy(model.state_dict())
    for epoch in range(config.epochs):
        model.train()
        correct = total = 0
        for images, labels in loader:
            images, labels = images.to(device), labels.to(device)
            optimizer.zero_grad()
            logits = model(images)
            loss = criterion(logits, labels)
            loss.backward()
            optimizer.step()
            correct += int((logits.argmax(dim=1) == labels).sum())
            total += len(labels)
        train_acc = correct / total
        eval_acc = _accuracy(model, eval_loader, device)
        result.train_accuracy.append(train_acc)
        result.eval_accuracy.append(eval_acc)
        if eval_acc > result.best_accuracy:
            result.best_accuracy = eval_acc
            result.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        logger.info("epoch %d: train acc %.3f, eval acc %.3f", epoch + 1, train_acc, eval_acc)
    model.load_state_dict(best_state)
    return result


def save_checkpoint(result: FinetuneResult, num_classes: int, config: FinetuneConfig, path: str | Path) -> None:
    torch.save(
        {
            "state_dict": result.model.state_dict(),
            "num_classes": num_classes,
            "arch": config.arch,
            "image_size": config.image_size,
            "best_epoch": result.best_epoch,
            "best_accuracy": result.best_accuracy,
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[nn.Module, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = build_classifier(payload["num_classes"], payload["arch"], weights="none")
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
