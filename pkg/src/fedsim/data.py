"""Datasets and non-IID partitioning across devices."""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.labels.shape[0]:
            raise DataError("samples must be a matrix with one row per label")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    # LabeledData protocol
    @property
    def x(self) -> np.ndarray:
        return self.samples

    @property
    def y(self) -> np.ndarray:
        return self.labels

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.samples[idx], self.labels[idx], self.num_classes)


@dataclass
class DeviceDataset:
    """One device's share of a parent dataset, addressed by row indices."""

    device_id: int
    indices: np.ndarray
    parent: Dataset = field(repr=False)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self._x = None
        self._y = None

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])

    @property
    def x(self) -> np.ndarray:
        if self._x is None:
            self._x = self.parent.samples[self.indices]
        return self._x

    @property
    def y(self) -> np.ndarray:
        if self._y is None:
            self._y = self.parent.labels[self.indices]
        return self._y

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.parent.num_classes)


@dataclass(frozen=True)
class PartitionSpec:
    num_devices: int
    alpha: float
    seed: int

    def __post_init__(self):
        if self.num_devices < 1:
            raise ConfigError("num_devices must be >= 1", field="num_devices")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive", field="alpha")


def _read_idx(path, magic: int, ndim: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    header = 4 * (1 + ndim)
    if len(raw) < header:
        raise FormatError(f"{path}: file too short for an IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    body = raw[header:]
    if len(body) < expected:
        raise FormatError(f"{path}: truncated, {len(body)} of {expected} payload bytes")
    return dims, body[:expected]


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Read an MNIST-style IDX image/label pair; pixels are scaled to [0, 1]."""
    (count, rows, cols), pix = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    (n_labels,), lab = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if n_labels != count:
        raise FormatError(f"image count {count} != label count {n_labels}")
    images = np.frombuffer(pix, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise FormatError("MNIST labels must lie in 0..9")
    return Dataset(images, labels, 10)


def load_mnist_dir(directory, split: str = "train") -> Dataset:
    prefix = {"train": "train", "test": "t10k"}[split]
    d = Path(directory)
    return load_mnist_idx(d / f"{prefix}-images-idx3-ubyte", d / f"{prefix}-labels-idx1-ubyte")


def synth_dataset(num_classes: int, samples_per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs whose class means lie on the unit sphere."""
    if min(num_classes, samples_per_class, dim) < 1 or spread < 0:
        raise ConfigError("synthetic dataset sizes must be positive")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    noise = rng.standard_normal((labels.size, dim)) * spread
    return Dataset(means[labels] + noise, labels, num_classes)


def _largest_remainder(total: int, proportions: np.ndarray) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(data: Dataset, spec: PartitionSpec) -> list[DeviceDataset]:
    """Split ``data`` across devices with per-class Dirichlet proportions.

    For each class, proportions ``p ~ Dir(alpha * 1_N)`` decide how that class's
    (shuffled) samples are dealt to the N devices; counts use largest-remainder
    rounding. Devices left empty take one sample from the currently largest
    device, so every device ends with ``n >= 1``.
    """
    n_dev = spec.num_devices
    if data.num_classes < 2:
        raise ConfigError("partitioning needs at least two classes", field="num_classes")
    if n_dev > len(data):
        raise ConfigError(
            f"cannot split {len(data)} samples across {n_dev} devices", field="num_devices"
        )
    rng = np.random.default_rng(spec.seed)
    buckets: list[list[np.ndarray]] = [[] for _ in range(n_dev)]
    alpha = np.full(n_dev, float(spec.alpha))
    for c in range(data.num_classes):
        idx = np.flatnonzero(data.labels == c)
        idx = idx[rng.permutation(idx.size)]
        props = rng.dirichlet(alpha)
        if not np.all(np.isfinite(props)) or props.sum() <= 0:
            props = np.full(n_dev, 1.0 / n_dev)
        counts = _largest_remainder(idx.size, props / props.sum())
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for k in range(n_dev):
            if counts[k]:
                buckets[k].append(idx[bounds[k]:bounds[k + 1]])

    parts = [np.sort(np.concatenate(b)) if b else np.empty(0, np.int64) for b in buckets]
    while True:
        sizes = np.array([p.size for p in parts])
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        donor = int(np.argmax(sizes))
        parts[int(empty[0])] = parts[donor][-1:].copy()
        parts[donor] = parts[donor][:-1]
    return [DeviceDataset(k, p, data) for k, p in enumerate(parts)]


def label_entropy(device: DeviceDataset) -> float:
    """Shannon entropy (nats) of a device's label distribution."""
    counts = device.label_counts()
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def mean_label_entropy(devices: list[DeviceDataset]) -> float:
    return float(np.mean([label_entropy(d) for d in devices]))


def partition_hash(devices: list[DeviceDataset]) -> str:
    h = hashlib.sha256()
    for d in devices:
        h.update(np.int64(d.device_id).tobytes())
        h.update(np.int64(d.n).tobytes())
        h.update(d.indices.astype("<i8").tobytes())
    return h.hexdigest()[:16]


def save_partition(path, devices: list[DeviceDataset], spec: PartitionSpec) -> None:
    payload = {
        "seed": spec.seed,
        "alpha": spec.alpha,
        "num_devices": spec.num_devices,
        "devices": [d.indices.tolist() for d in devices],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f)
    os.replace(tmp, path)


def load_partition(path, data: Dataset) -> tuple[list[DeviceDataset], PartitionSpec]:
    with open(path) as f:
        payload = json.load(f)
    try:
        spec = PartitionSpec(int(payload["num_devices"]), float(payload["alpha"]), int(payload["seed"]))
        lists = payload["devices"]
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc}") from None
    if len(lists) != spec.num_devices:
        raise FormatError(f"{path}: {len(lists)} index lists for {spec.num_devices} devices")
    devices = [DeviceDataset(k, np.asarray(ix, dtype=np.int64), data) for k, ix in enumerate(lists)]
    flat = np.concatenate([d.indices for d in devices]) if devices else np.empty(0, np.int64)
    if flat.size and (flat.min() < 0 or flat.max() >= len(data)):
        raise FormatError(f"{path}: index out of range for the dataset")
    if np.unique(flat).size != flat.size:
        raise FormatError(f"{path}: device index lists overlap")
    return devices, spec
