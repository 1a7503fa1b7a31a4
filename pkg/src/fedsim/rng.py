"""Named, independent random streams derived from one experiment seed.

Every consumer of randomness (model init, partitioning, grouping, selection,
per-device local training) draws from its own stream, so changing how one
component consumes randomness never perturbs the others.
"""

from __future__ import annotations

import zlib

import numpy as np

INIT = "init"
PARTITION = "partition"
DATA = "data"
GROUPING = "grouping"
SELECTION = "selection"
TRAIN = "train"
PROBE = "probe"


def _name_key(name: str) -> int:
    if not name:
        raise ValueError("stream name must be non-empty")
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Return a fresh generator for ``(seed, name, *keys)``.

    The same arguments always replay the same draws; distinct names or keys
    give statistically independent streams (via ``SeedSequence`` spawn keys).
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if any(k < 0 for k in keys):
        raise ValueError("stream keys must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(_name_key(name), *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))


def train_stream(seed: int, round_idx: int, device_id: int) -> np.random.Generator:
    """Stream for one device's local training session in one round."""
    return stream(seed, TRAIN, round_idx, device_id)
