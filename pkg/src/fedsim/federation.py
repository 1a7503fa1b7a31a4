"""Everything a protocol runner needs besides its own hyperparameters."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset, DeviceDataset, partition_hash


@dataclass
class TrainConfig:
    """Local-training hyperparameters shared by every device."""

    spec: nn.ModelSpec
    epochs: int = 5
    batch_size: int = 50
    opt: nn.SgdConfig = nn.SgdConfig()

    def run(self, model, device, rng, grad_correction=None):
        return nn.local_train(model, self.spec, device, self.epochs, self.batch_size,
                              self.opt, rng, grad_correction)


@dataclass
class Federation:
    devices: list[DeviceDataset]
    train_set: Dataset
    eval_set: Dataset
    spec: nn.ModelSpec
    init_model: np.ndarray
    seed: int

    @property
    def num_devices(self) -> int:
        return len(self.devices)

    def meta(self) -> dict:
        return {"partition_hash": partition_hash(self.devices), "init_hash": model_hash(self.init_model)}


def model_hash(model: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(model, dtype="<f8").tobytes()).hexdigest()[:16]
