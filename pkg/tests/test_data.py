import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedsim.data import (Dataset, PartitionSpec, dirichlet_partition, load_mnist_dir,
                         load_mnist_idx, load_partition, mean_label_entropy, partition_hash,
                         save_partition, synth_dataset)
from fedsim.errors import ConfigError, FormatError

from conftest import MNIST_DIR, have_mnist


def write_idx(tmp_path, images: np.ndarray, labels: np.ndarray, img_magic=0x803, lab_magic=0x801):
    ip, lp = tmp_path / "img", tmp_path / "lab"
    n, r, c = images.shape
    ip.write_bytes(struct.pack(">IIII", img_magic, n, r, c) + images.astype(np.uint8).tobytes())
    lp.write_bytes(struct.pack(">II", lab_magic, labels.size) + labels.astype(np.uint8).tobytes())
    return ip, lp


def test_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (7, 4, 3))
    labs = rng.integers(0, 10, 7)
    ds = load_mnist_idx(*write_idx(tmp_path, imgs, labs))
    assert ds.samples.shape == (7, 12)
    np.testing.assert_array_equal(ds.labels, labs)
    np.testing.assert_allclose(ds.samples, imgs.reshape(7, 12) / 255.0)
    assert ds.samples.min() >= 0 and ds.samples.max() <= 1


def test_labels_file_with_image_magic_rejected(tmp_path):
    ip, lp = write_idx(tmp_path, np.zeros((2, 2, 2)), np.zeros(2), lab_magic=0x803)
    with pytest.raises(FormatError, match="magic"):
        load_mnist_idx(ip, lp)


def test_empty_file_rejected(tmp_path):
    ip, lp = write_idx(tmp_path, np.zeros((2, 2, 2)), np.zeros(2))
    ip.write_bytes(b"")
    with pytest.raises(FormatError):
        load_mnist_idx(ip, lp)


def test_truncated_file_rejected(tmp_path):
    ip, lp = write_idx(tmp_path, np.zeros((3, 2, 2)), np.zeros(3))
    ip.write_bytes(ip.read_bytes()[:-1])
    with pytest.raises(FormatError, match="truncated"):
        load_mnist_idx(ip, lp)


def test_count_mismatch_rejected(tmp_path):
    ip, lp = write_idx(tmp_path, np.zeros((3, 2, 2)), np.zeros(2))
    with pytest.raises(FormatError):
        load_mnist_idx(ip, lp)


@pytest.mark.skipif(not have_mnist(), reason=f"MNIST IDX files not present in {MNIST_DIR}")
def test_canonical_mnist_train_files():
    ds = load_mnist_dir(MNIST_DIR, "train")
    assert ds.samples.shape == (60000, 784)
    assert ds.num_classes == 10
    assert ds.labels[:10].tolist() == [5, 0, 4, 1, 9, 2, 1, 3, 1, 4]
    assert np.bincount(ds.labels).size == 10


def test_synth_shapes_and_balance():
    ds = synth_dataset(10, 100, 32, 0.1, seed=3)
    assert ds.samples.shape == (1000, 32)
    assert np.bincount(ds.labels).tolist() == [100] * 10


def test_synth_zero_spread_collapses_classes():
    ds = synth_dataset(4, 20, 5, 0.0, seed=1)
    for c in range(4):
        rows = ds.samples[ds.labels == c]
        assert np.all(rows == rows[0])


def test_synth_is_deterministic():
    a, b = synth_dataset(3, 10, 4, 0.5, 9), synth_dataset(3, 10, 4, 0.5, 9)
    assert a.samples.tobytes() == b.samples.tobytes()


def test_synth_linearly_separable_at_small_spread():
    """Nearest-mean classification is perfect at spread 0.1 for this seed."""
    ds = synth_dataset(10, 100, 32, 0.1, seed=5)
    means = np.stack([ds.samples[ds.labels == c].mean(0) for c in range(10)])
    pred = np.argmin(((ds.samples[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == ds.labels) == 1.0


def _balanced(classes=10, per=100, seed=0):
    return synth_dataset(classes, per, 4, 1.0, seed)


def assert_set_partition(devices, n):
    flat = np.concatenate([d.indices for d in devices])
    assert flat.size == n
    assert np.array_equal(np.sort(flat), np.arange(n))
    assert all(d.n >= 1 for d in devices)


def test_single_device_owns_everything():
    data = _balanced()
    devs = dirichlet_partition(data, PartitionSpec(1, 0.5, 0))
    assert len(devs) == 1
    assert np.array_equal(devs[0].indices, np.arange(len(data)))


@pytest.mark.parametrize("seed", range(5))
def test_large_alpha_is_near_uniform(seed):
    data = _balanced(seed=seed)
    devs = dirichlet_partition(data, PartitionSpec(10, 10000.0, seed))
    for c in range(10):
        share = np.array([d.label_counts()[c] for d in devs]) / 100
        assert np.all(np.abs(share - 0.1) <= 0.02)


def test_small_alpha_more_heterogeneous_than_alpha_one():
    data = _balanced(per=600)
    lo = [mean_label_entropy(dirichlet_partition(data, PartitionSpec(100, 0.1, s))) for s in range(5)]
    hi = [mean_label_entropy(dirichlet_partition(data, PartitionSpec(100, 1.0, s))) for s in range(5)]
    assert np.mean(lo) < np.mean(hi)


def test_entropy_monotone_in_alpha():
    data = _balanced(per=600)
    means = [np.mean([mean_label_entropy(dirichlet_partition(data, PartitionSpec(100, a, s)))
                      for s in range(5)]) for a in (0.1, 0.5, 1.0, 100.0)]
    assert means == sorted(means)


def test_too_many_devices_is_config_error():
    with pytest.raises(ConfigError):
        dirichlet_partition(_balanced(2, 3), PartitionSpec(7, 1.0, 0))
    with pytest.raises(ConfigError):
        PartitionSpec(3, 0.0, 0)


def test_partition_is_deterministic():
    data = _balanced()
    a = dirichlet_partition(data, PartitionSpec(17, 0.3, 4))
    b = dirichlet_partition(data, PartitionSpec(17, 0.3, 4))
    assert partition_hash(a) == partition_hash(b)


@settings(max_examples=40, deadline=None)
@given(n_dev=st.integers(1, 60), alpha=st.floats(0.01, 50.0), seed=st.integers(0, 2**31),
       per=st.integers(1, 12), classes=st.integers(2, 6))
def test_partition_is_set_partition(n_dev, alpha, seed, per, classes):
    data = synth_dataset(classes, per, 2, 1.0, seed)
    if n_dev > len(data):
        with pytest.raises(ConfigError):
            dirichlet_partition(data, PartitionSpec(n_dev, alpha, seed))
        return
    devs = dirichlet_partition(data, PartitionSpec(n_dev, alpha, seed))
    assert len(devs) == n_dev
    assert_set_partition(devs, len(data))


def test_partition_cache_roundtrip(tmp_path):
    data = _balanced()
    spec = PartitionSpec(12, 0.2, 7)
    devs = dirichlet_partition(data, spec)
    save_partition(tmp_path / "p.json", devs, spec)
    loaded, spec2 = load_partition(tmp_path / "p.json", data)
    assert spec2 == spec
    assert partition_hash(loaded) == partition_hash(devs)


def test_dataset_rejects_bad_labels():
    from fedsim.errors import DataError
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([0, 3]), 3)
