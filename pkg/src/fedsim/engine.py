"""FedCat server: cycles of duplicated models trained through concatenated devices.

A cycle lasts K rounds. At its start the global model is copied K times; in
round ``j`` of the cycle, copy ``i`` is sent to selected device
``((i + j - 2) % K) + 1`` (1-based), trained there, and replaced by the
returned parameters. After K rounds each copy has visited K different
devices, and the new global model is the average of the copies weighted by
how many samples each copy has seen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .config import ExperimentConfig
from .errors import ProtocolError
from .federation import Federation, TrainConfig
from .metrics import MetricsLog, Recorder
from .parallel import ordered_map
from .selection import CountTable, GroupAssignment, GroupedCountSelector, SelectionPolicy, UniformSelector


@dataclass
class CycleState:
    copies: list[np.ndarray]
    d: list[int]
    offset: int = 0
    length: int | None = None  # rounds per cycle; K unless per-round aggregation

    def __post_init__(self):
        if self.length is None:
            self.length = len(self.copies)

    @property
    def k(self) -> int:
        return len(self.copies)

    @property
    def complete(self) -> bool:
        return self.offset == self.length


@dataclass
class GlobalState:
    global_model: np.ndarray
    round: int = 0
    cycle: CycleState | None = None
    count_table: CountTable | None = None
    groups: GroupAssignment | None = None
    completed_cycles: int = 0


def dispatch_target(i: int, j: int, k: int) -> int:
    """Selected-device slot (1-based) that copy ``i`` visits in cycle round ``j``."""
    if k < 1 or not (1 <= i <= k and 1 <= j <= k):
        raise ProtocolError(f"dispatch indices out of range: i={i}, j={j}, K={k}")
    return (i + j - 2) % k + 1


def begin_cycle(state: GlobalState, k: int, length: int | None = None) -> CycleState:
    """Duplicate the global model into K independent copies with zero data counts."""
    length = k if length is None else length
    if state.cycle is not None and not state.cycle.complete:
        raise ProtocolError("a training cycle is already in progress")
    if state.round % length != 0:
        raise ProtocolError(f"cycles start at multiples of {length}; round is {state.round}")
    return CycleState([state.global_model.copy() for _ in range(k)], [0] * k, 0, length)


def train_iter(cycle: CycleState, selected: list[int], devices, train: TrainConfig,
               streams: list[np.random.Generator]) -> CycleState:
    """One training iteration: every copy trains on its dispatch target.

    ``selected[s]`` is the device in (0-based) slot ``s`` and ``streams[s]`` its
    training RNG. Returns a new state; the input is left untouched.
    """
    k = cycle.k
    if len(selected) != k or len(streams) != k:
        raise ProtocolError(f"expected {k} selected devices, got {len(selected)}")
    if cycle.offset >= cycle.length:
        raise ProtocolError("cycle already complete; aggregate before training further")
    slots = [(cycle.offset + i) % k for i in range(k)]
    for s in slots:
        if devices[selected[s]].n == 0:
            raise ProtocolError(f"device {selected[s]} was selected but holds no data")

    def work(i):
        s = slots[i]
        return train.run(cycle.copies[i], devices[selected[s]], streams[s])

    results = ordered_map(work, range(k))
    copies = [cycle.copies[i] + delta for i, (delta, _) in enumerate(results)]
    d = [cycle.d[i] + n for i, (_, n) in enumerate(results)]
    return CycleState(copies, d, cycle.offset + 1, cycle.length)


def weighted_average(models: list[np.ndarray], weights) -> np.ndarray:
    """``sum_i w_i m_i / sum_j w_j``, with weights normalised before summing.

    Normalising first makes a single model come back bit-identical.
    """
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if len(models) == 0 or not total > 0:
        raise ProtocolError("aggregation needs a positive total weight")
    w = w / total
    out = w[0] * models[0]
    for wi, m in zip(w[1:], models[1:]):
        out = out + wi * m
    return out


def aggregate(cycle: CycleState) -> np.ndarray:
    """Average the copies weighted by their accumulated sample counts."""
    if not cycle.complete:
        raise ProtocolError(f"cycle incomplete: {cycle.offset} of {cycle.length} rounds done")
    if sum(cycle.d) <= 0:
        raise ProtocolError("cannot aggregate: accumulated data size is zero")
    return weighted_average(cycle.copies, cycle.d)


def default_selector(config: ExperimentConfig, num_devices: int, variant: str | None):
    k = config.num_selected
    if variant == "dc":
        return UniformSelector(num_devices, k, rngmod.stream(config.seed, rngmod.SELECTION))
    policy = SelectionPolicy(config.epsilon, config.lam)
    return GroupedCountSelector(num_devices, k, policy,
                                rngmod.stream(config.seed, rngmod.GROUPING),
                                rngmod.stream(config.seed, rngmod.SELECTION))


_VARIANT_METHOD = {None: "fedcat", "gc": "fedcat_gc", "dc": "fedcat_dc"}


def run_fedcat(config: ExperimentConfig, fed: Federation, selector=None,
               variant: str | None = None) -> MetricsLog:
    """Run FedCat (or an ablation) for ``config.rounds`` rounds.

    ``variant="gc"`` keeps grouped count-based selection but aggregates every
    round; ``variant="dc"`` keeps concatenated cycles but picks K devices
    uniformly at random. ``selector`` overrides device selection entirely.
    """
    if variant not in _VARIANT_METHOD:
        raise ValueError(f"unknown FedCat variant {variant!r}")
    k = config.num_selected
    if k > fed.num_devices:
        raise ProtocolError(f"K={k} exceeds the number of devices ({fed.num_devices})")
    method = _VARIANT_METHOD[variant]
    selector = selector or default_selector(config, fed.num_devices, variant)
    train = TrainConfig(fed.spec, config.epochs, config.batch_size, config.sgd())
    cycle_len = 1 if variant == "gc" else k

    state = GlobalState(fed.init_model.copy())
    rec = Recorder(method, fed.spec, fed.eval_set, fed.train_set.x, fed.train_set.y,
                   k, config.eval_every, config.rounds, config.record_wall_time)
    rec.start(state.global_model)
    for r in range(config.rounds):
        selected = selector.select(r)
        if r % cycle_len == 0:
            state.cycle = begin_cycle(state, k, cycle_len)
        streams = [rngmod.train_stream(fed.seed, r, dev) for dev in selected]
        state.cycle = train_iter(state.cycle, selected, fed.devices, train, streams)
        if r % cycle_len == cycle_len - 1:
            state.global_model = aggregate(state.cycle)
            state.completed_cycles += 1
        state.round = r + 1
        state.count_table = getattr(selector, "table", None)
        state.groups = getattr(selector, "groups", None)
        rec.end_round(r + 1, state.global_model)

    log = rec.log
    log.config = config.to_dict()
    log.meta = fed.meta()
    log.final_model = state.global_model
    return log


def run_ablation(config: ExperimentConfig, fed: Federation, variant: str | None = None,
                 selector=None) -> MetricsLog:
    """FedCat w/ GC (``"gc"``) or w/ DC (``"dc"``); ``None`` is plain FedCat."""
    if variant is not None:
        variant = variant.lower()
    return run_fedcat(config, fed, selector=selector, variant=variant)


def save_checkpoint(path, model: np.ndarray, spec) -> None:
    """JSON layout header line followed by little-endian float64 parameters."""
    header = {"layout": [[name, list(shape)] for name, shape in spec.layout],
              "model": spec.to_dict(), "num_params": int(model.size), "dtype": "<f8"}
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(np.ascontiguousarray(model, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline())
        model = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    if model.size != header["num_params"]:
        raise ProtocolError("checkpoint payload does not match its header")
    return model, header
