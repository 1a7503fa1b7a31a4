"""FedAvg, FedProx and SCAFFOLD on the same substrate as FedCat.

All three share model init, partitions, per-(round, device) training streams,
aggregation and evaluation with the FedCat engine, so runs differ only in the
protocol itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import rng as rngmod
from .config import ExperimentConfig
from .engine import weighted_average
from .errors import ConfigError, ProtocolError
from .federation import Federation, TrainConfig
from .metrics import MetricsLog, Recorder
from .parallel import ordered_map
from .selection import UniformSelector

FEDPROX_MU_GRID = (0.001, 0.01, 0.1, 1.0)


@dataclass(frozen=True)
class ProxConfig:
    mu: float

    def __post_init__(self):
        if self.mu < 0:
            raise ConfigError("mu must be non-negative", field="mu")


@dataclass
class ScaffoldState:
    server_control: np.ndarray
    client_controls: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, num_params: int) -> "ScaffoldState":
        return cls(np.zeros(num_params))

    def client(self, device_id: int) -> np.ndarray:
        c = self.client_controls.get(device_id)
        return np.zeros_like(self.server_control) if c is None else c


def prox_loss_and_grad(model, spec: nn.ModelSpec, batch, anchor, mu: float):
    """Cross-entropy plus ``(mu/2)*||w - anchor||^2`` and its gradient."""
    loss, grad = nn.loss_and_grad(model, spec, batch)
    diff = model - anchor
    return loss + 0.5 * mu * float(diff @ diff), grad + mu * diff


def _rounds(config: ExperimentConfig, fed: Federation, method: str, selector,
            client_step, server_step=None) -> MetricsLog:
    k = config.num_selected
    if k > fed.num_devices:
        raise ProtocolError(f"K={k} exceeds the number of devices ({fed.num_devices})")
    selector = selector or UniformSelector(fed.num_devices, k,
                                           rngmod.stream(config.seed, rngmod.SELECTION))
    global_model = fed.init_model.copy()
    rec = Recorder(method, fed.spec, fed.eval_set, fed.train_set.x, fed.train_set.y,
                   k, config.eval_every, config.rounds, config.record_wall_time)
    rec.start(global_model)
    for r in range(config.rounds):
        selected = selector.select(r)
        for dev in selected:
            if fed.devices[dev].n == 0:
                raise ProtocolError(f"device {dev} was selected but holds no data")
        anchor = global_model
        results = ordered_map(
            lambda dev: client_step(anchor, dev, rngmod.train_stream(fed.seed, r, dev)), selected
        )
        models = [anchor + delta for delta, _ in results]
        global_model = weighted_average(models, [n for _, n in results])
        if server_step is not None:
            server_step(selected, results)
        rec.end_round(r + 1, global_model)
    log = rec.log
    log.config = config.to_dict()
    log.meta = fed.meta()
    log.final_model = global_model
    return log


def _train_config(config: ExperimentConfig, fed: Federation) -> TrainConfig:
    return TrainConfig(fed.spec, config.epochs, config.batch_size, config.sgd())


def run_fedavg(config: ExperimentConfig, fed: Federation, selector=None) -> MetricsLog:
    """Uniform sampling of K devices; models averaged with weights ``n_i``."""
    train = _train_config(config, fed)

    def client(model, dev, stream):
        return train.run(model, fed.devices[dev], stream)

    return _rounds(config, fed, "fedavg", selector, client)


def run_fedprox(config: ExperimentConfig, fed: Federation, prox: ProxConfig | None = None,
                selector=None) -> MetricsLog:
    """FedAvg with a proximal pull ``mu*(w - w_dispatched)`` on every local step."""
    if prox is None:
        if config.mu is None:
            raise ConfigError("fedprox requires 'mu'", field="mu")
        prox = ProxConfig(config.mu)
    train = _train_config(config, fed)
    mu = prox.mu

    def client(model, dev, stream):
        # displacement from the dispatched model is exactly w - w_global
        return train.run(model, fed.devices[dev], stream, lambda w, disp: mu * disp)

    return _rounds(config, fed, "fedprox", selector, client)


def momentum_steps(steps: int, momentum: float) -> float:
    """Distance travelled, in units of ``lr * g``, by ``steps`` momentum steps under a constant gradient.

    Velocity starts at zero, so step ``s`` moves ``(1 - m**s) / (1 - m)``.
    """
    if momentum == 0:
        return float(steps)
    m = momentum
    return (steps - m * (1 - m ** steps) / (1 - m)) / (1 - m)


def run_scaffold(config: ExperimentConfig, fed: Federation, selector=None,
                 state: ScaffoldState | None = None) -> MetricsLog:
    """SCAFFOLD with the "option II" client control update.

    Local gradients are corrected by ``c - c_k``. After a session of ``S`` steps
    the client sets ``c_k <- c_k - c + (w_global - w_local)/(S_eff*lr)`` and the
    server moves ``c`` by ``(|selected|/N)`` times the mean control change.
    ``S_eff`` is the momentum-aware step count from :func:`momentum_steps`; it
    equals ``S`` for plain SGD.
    ``config.scaffold_controls=False`` freezes every control at zero.
    """
    train = _train_config(config, fed)
    state = state if state is not None else ScaffoldState.zeros(fed.spec.num_params)
    use_controls = config.scaffold_controls
    new_controls: dict[int, np.ndarray] = {}

    def client(model, dev, stream):
        if not use_controls:
            return train.run(model, fed.devices[dev], stream)
        correction = state.server_control - state.client(dev)
        delta, n = train.run(model, fed.devices[dev], stream, lambda w, disp: correction)
        steps = momentum_steps(nn.num_local_steps(n, config.epochs, config.batch_size), config.momentum)
        if config.lr > 0:
            new_controls[dev] = state.client(dev) - state.server_control - delta / (steps * config.lr)
        return delta, n

    def server(selected, results):
        if not use_controls or not new_controls:
            return
        changes = [new_controls[d] - state.client(d) for d in selected]
        for d in selected:
            state.client_controls[d] = new_controls[d]
        state.server_control = state.server_control + (len(selected) / fed.num_devices) * np.mean(changes, axis=0)
        new_controls.clear()

    return _rounds(config, fed, "scaffold", selector, client, server)
