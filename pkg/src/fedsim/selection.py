"""Grouping- and count-based device selection.

Devices are randomly split into K groups every ``lambda*K`` rounds. Each round
one device is picked per group: with probability ``epsilon`` the one with the
largest exploration weight ``1/sqrt(count)``, otherwise a draw proportional to
the weights. Counts are kept per (device, round-within-cycle slot).

Note that ``epsilon`` is the *greedy* probability here, the reverse of the
usual bandit convention.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ProtocolError


@dataclass
class CountTable:
    counts: np.ndarray  # (N, K) int64

    @classmethod
    def zeros(cls, num_devices: int, k: int) -> "CountTable":
        return cls(np.zeros((num_devices, k), dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "CountTable":
        return CountTable(self.counts.copy())


@dataclass
class GroupAssignment:
    groups: list[list[int]]
    formed_at_round: int = 0


@dataclass(frozen=True)
class SelectionPolicy:
    epsilon: float = 0.5
    lam: int = 1

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]", field="epsilon")
        if self.lam < 1:
            raise ConfigError("lambda must be a positive integer", field="lambda")


@dataclass
class SelectionRecord:
    round: int
    slot: int
    group: int
    device: int
    greedy: bool


def regroup(device_ids, k: int, rng: np.random.Generator, round_idx: int = 0) -> GroupAssignment:
    """Shuffle devices and cut them into ``k`` groups whose sizes differ by <= 1."""
    ids = np.asarray(list(device_ids), dtype=np.int64)
    if k < 1 or k > ids.size:
        raise ConfigError(f"cannot form {k} groups from {ids.size} devices", field="K")
    perm = ids[rng.permutation(ids.size)]
    return GroupAssignment([g.tolist() for g in np.array_split(perm, k)], round_idx)


def mbie_weight(count: int) -> float:
    """Exploration weight ``1/sqrt(count)``; never-selected devices get ``inf``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    return math.inf if count == 0 else 1.0 / math.sqrt(count)


def _pick(group: list[int], weights: np.ndarray, greedy: bool, rng: np.random.Generator) -> int:
    unvisited = np.flatnonzero(np.isinf(weights))
    if unvisited.size:
        # unvisited devices all tie at +inf and share the mass equally
        return group[int(unvisited[rng.integers(unvisited.size)])]
    if greedy:
        best = weights.max()
        return min(dev for dev, w in zip(group, weights) if w == best)
    p = weights / weights.sum()
    return group[int(rng.choice(len(group), p=p))]


def select_devices(
    groups: GroupAssignment,
    table: CountTable,
    round_idx: int,
    k: int,
    policy: SelectionPolicy,
    rng: np.random.Generator,
    trace: list[SelectionRecord] | None = None,
) -> tuple[list[int], CountTable]:
    """Choose one device per group and bump its count for slot ``round % k``.

    Returns the selected ids (in group order) and the updated table; the input
    table is not modified.
    """
    if table.counts.shape[1] != k or len(groups.groups) != k:
        raise ConfigError("count table / group assignment do not match K", field="K")
    if round_idx < 0:
        raise ValueError("round must be non-negative")
    slot = round_idx % k
    out = table.copy()
    selected = []
    for gi, group in enumerate(groups.groups):
        if not group:
            raise ProtocolError(f"group {gi} is empty")
        weights = np.array([mbie_weight(int(out.counts[d, slot])) for d in group])
        greedy = bool(rng.random() < policy.epsilon)
        dev = _pick(group, weights, greedy, rng)
        out.counts[dev, slot] += 1
        selected.append(dev)
        if trace is not None:
            trace.append(SelectionRecord(round_idx, slot, gi, dev, greedy))
    return selected, out


class GroupedCountSelector:
    """Stateful driver of regroup + select_devices across a run."""

    def __init__(self, num_devices: int, k: int, policy: SelectionPolicy,
                 grouping_rng: np.random.Generator, selection_rng: np.random.Generator):
        if k < 1 or k > num_devices:
            raise ConfigError(f"K={k} must lie in [1, N={num_devices}]", field="K")
        self.num_devices = num_devices
        self.k = k
        self.policy = policy
        self.table = CountTable.zeros(num_devices, k)
        self.groups: GroupAssignment | None = None
        self.trace: list[SelectionRecord] = []
        self._grouping_rng = grouping_rng
        self._selection_rng = selection_rng

    def select(self, round_idx: int) -> list[int]:
        if round_idx % (self.policy.lam * self.k) == 0 or self.groups is None:
            self.groups = regroup(range(self.num_devices), self.k, self._grouping_rng, round_idx)
        selected, self.table = select_devices(
            self.groups, self.table, round_idx, self.k, self.policy, self._selection_rng, self.trace
        )
        return selected


class UniformSelector:
    """K distinct devices uniformly at random each round (no groups, no counts)."""

    def __init__(self, num_devices: int, k: int, rng: np.random.Generator):
        if k < 1 or k > num_devices:
            raise ConfigError(f"K={k} must lie in [1, N={num_devices}]", field="K")
        self.num_devices = num_devices
        self.k = k
        self._rng = rng
        self.trace: list[SelectionRecord] = []

    def select(self, round_idx: int) -> list[int]:
        chosen = self._rng.choice(self.num_devices, size=self.k, replace=False).tolist()
        for slot, dev in enumerate(chosen):
            self.trace.append(SelectionRecord(round_idx, round_idx % self.k, -1, int(dev), False))
        return [int(d) for d in chosen]


@dataclass
class ReplaySelector:
    """Replays a recorded per-round selection sequence."""

    rounds: list[list[int]]
    trace: list[SelectionRecord] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.rounds[0])

    def select(self, round_idx: int) -> list[int]:
        chosen = list(self.rounds[round_idx])
        for dev in chosen:
            self.trace.append(SelectionRecord(round_idx, round_idx % len(chosen), -1, dev, False))
        return chosen


def rounds_from_trace(trace: list[SelectionRecord]) -> list[list[int]]:
    """Regroup a flat trace into per-round device lists."""
    out: dict[int, list[int]] = {}
    for rec in trace:
        out.setdefault(rec.round, []).append(rec.device)
    return [out[r] for r in sorted(out)]


def write_trace_csv(path, trace: list[SelectionRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["round", "slot", "group", "device", "greedy"])
        for rec in trace:
            w.writerow([rec.round, rec.slot, rec.group, rec.device, int(rec.greedy)])
