import os
from pathlib import Path

import numpy as np
import pytest

from fedsim import nn
from fedsim.data import Dataset, DeviceDataset

MNIST_DIR = Path(os.environ.get("SIM_MNIST_DIR", "/root/data/mnist"))

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def have_mnist() -> bool:
    return (MNIST_DIR / "train-images-idx3-ubyte").exists()


def central_diff_grad(f, w, h=1e-4):
    """Independent oracle: central finite differences of a scalar function."""
    g = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def random_device(rng, n, dim, classes, device_id=0):
    x = rng.random((n, dim))
    y = rng.integers(0, classes, n)
    return DeviceDataset(device_id, np.arange(n), Dataset(x, y, classes))


@pytest.fixture
def small_spec():
    return nn.ModelSpec(input_dim=6, hidden_layers=(5,), num_classes=4)


@pytest.fixture
def criterion():
    """Record an acceptance criterion's outcome for the terminal summary."""

    class Recorder:
        def __call__(self, name: str, ok: bool, detail: str = ""):
            _ACCEPTANCE.append((name, bool(ok), detail))
            assert ok, f"{name}: {detail}"

    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
