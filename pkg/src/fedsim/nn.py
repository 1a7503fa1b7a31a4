"""Flat-parameter MLP classifier, cross-entropy loss and momentum SGD.

A model is a single 1-D float64 array (a "param vector"); its layout is fully
determined by a :class:`ModelSpec`. Keeping parameters flat makes the
server-side protocol arithmetic (copies, deltas, weighted averages) plain
vector algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError, DataError, NumericError, ProtocolError

ParamVector = np.ndarray
GradCorrection = Callable[[ParamVector, ParamVector], ParamVector]


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_layers: tuple[int, ...] = (64,)
    num_classes: int = 10
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1 or self.num_classes < 1:
            raise ConfigError("input_dim and num_classes must be positive", field="model")
        if any(h < 1 for h in self.hidden_layers):
            raise ConfigError("hidden layer widths must be positive", field="model")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}", field="activation")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.num_classes)

    @property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        dims = self.dims
        for i in range(len(dims) - 1):
            out.append((f"W{i}", (dims[i], dims[i + 1])))
            out.append((f"b{i}", (dims[i + 1],)))
        return out

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": list(self.hidden_layers),
            "num_classes": self.num_classes,
            "activation": self.activation,
        }


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative", field="lr")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)", field="momentum")


@dataclass
class SgdState:
    learning_rate: float
    momentum: float
    velocity: ParamVector = field(repr=False)

    @classmethod
    def fresh(cls, opt: SgdConfig, num_params: int) -> "SgdState":
        return cls(opt.learning_rate, opt.momentum, np.zeros(num_params))


class LabeledData(Protocol):
    x: np.ndarray
    y: np.ndarray


def unflatten(spec: ModelSpec, model: ParamVector) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into per-layer ``(W, b)`` views (no copies)."""
    model = np.asarray(model)
    if model.ndim != 1 or model.shape[0] != spec.num_params:
        raise ConfigError(
            f"parameter vector has shape {model.shape}, spec expects ({spec.num_params},)",
            field="model",
        )
    layers = []
    pos = 0
    dims = spec.dims
    for i in range(len(dims) - 1):
        n_w = dims[i] * dims[i + 1]
        w = model[pos:pos + n_w].reshape(dims[i], dims[i + 1])
        pos += n_w
        b = model[pos:pos + dims[i + 1]]
        pos += dims[i + 1]
        layers.append((w, b))
    return layers


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParamVector:
    """Glorot-uniform weights, zero biases."""
    parts = []
    dims = spec.dims
    for i in range(len(dims) - 1):
        limit = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
        parts.append(rng.uniform(-limit, limit, size=dims[i] * dims[i + 1]))
        parts.append(np.zeros(dims[i + 1]))
    return np.concatenate(parts)


def _check_x(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(
            f"batch has shape {x.shape}, expected (*, {spec.input_dim})", field="input_dim"
        )
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _forward_cache(layers, x):
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def forward(model: ParamVector, spec: ModelSpec, batch_x: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per sample."""
    x = _check_x(spec, batch_x)
    logits = _forward_cache(unflatten(spec, model), x)[-1]
    return _softmax(logits)


def loss_and_grad(
    model: ParamVector, spec: ModelSpec, batch: tuple[np.ndarray, np.ndarray]
) -> tuple[float, ParamVector]:
    """Mean cross-entropy over ``batch = (x, y)`` and its exact gradient."""
    x, y = batch
    x = _check_x(spec, x)
    y = np.asarray(y)
    if x.shape[0] == 0:
        raise DataError("empty batch")
    if y.shape != (x.shape[0],):
        raise DataError(f"labels have shape {y.shape}, expected ({x.shape[0]},)")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise DataError(f"labels must lie in [0, {spec.num_classes})")

    layers = unflatten(spec, model)
    acts = _forward_cache(layers, x)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(x.shape[0])
    loss = float(np.mean(log_norm - shifted[rows, y]))

    delta = np.exp(shifted - log_norm[:, None])
    delta[rows, y] -= 1.0
    delta /= x.shape[0]

    grad = np.empty(spec.num_params)
    grads = unflatten(spec, grad)
    for i in range(len(layers) - 1, -1, -1):
        gw, gb = grads[i]
        gw[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layers[i][0].T) * (acts[i] > 0)
    return loss, grad


def sgd_step(model: ParamVector, grad: ParamVector, state: SgdState) -> ParamVector:
    """Heavy-ball step: ``v <- momentum*v + g``; ``w <- w - lr*v``.

    Updates ``state.velocity`` in place and returns the new parameters.
    """
    if grad.shape != model.shape or state.velocity.shape != model.shape:
        raise ConfigError("parameter layouts do not match", field="model")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    state.velocity = state.momentum * state.velocity + grad
    out = model - state.learning_rate * state.velocity
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite parameters after SGD step")
    return out


def num_local_steps(n: int, epochs: int, batch_size: int) -> int:
    return epochs * -(-n // batch_size)


def local_train(
    model: ParamVector,
    spec: ModelSpec,
    data: LabeledData,
    epochs: int,
    batch_size: int,
    opt: SgdConfig,
    rng: np.random.Generator,
    grad_correction: GradCorrection | None = None,
) -> tuple[ParamVector, int]:
    """Run ``epochs`` of shuffled mini-batch SGD and return ``(delta, n)``.

    The session tracks the displacement from ``model`` rather than the model
    itself, so ``model + delta`` is bit-identical to the parameters the device
    ends with. ``grad_correction(w, displacement)`` is added to every mini-batch
    gradient (FedProx / SCAFFOLD hooks). Velocity starts at zero each call.
    """
    n = int(np.asarray(data.y).shape[0])
    if n == 0:
        raise ProtocolError("local training requested on a device with no data")
    if epochs < 1 or batch_size < 1:
        raise ConfigError("epochs and batch_size must be >= 1", field="epochs")
    x = np.asarray(data.x)
    y = np.asarray(data.y)
    state = SgdState.fresh(opt, model.shape[0])
    disp = np.zeros_like(model)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            w = model + disp
            _, grad = loss_and_grad(w, spec, (x[idx], y[idx]))
            if grad_correction is not None:
                grad = grad + grad_correction(w, disp)
            disp = sgd_step(disp, grad, state)
    return disp, n


def predict(model: ParamVector, spec: ModelSpec, x: np.ndarray, chunk: int = 8192) -> np.ndarray:
    x = _check_x(spec, x)
    layers = unflatten(spec, model)
    out = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        out[s:s + chunk] = _forward_cache(layers, x[s:s + chunk])[-1].argmax(axis=1)
    return out


def accuracy(model: ParamVector, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict(model, spec, x) == np.asarray(y)))


def mean_loss(model: ParamVector, spec: ModelSpec, x: np.ndarray, y: np.ndarray, chunk: int = 8192) -> float:
    """Mean cross-entropy over a full dataset, evaluated in chunks."""
    total = 0.0
    for s in range(0, len(y), chunk):
        xb, yb = x[s:s + chunk], y[s:s + chunk]
        total += loss_and_grad(model, spec, (xb, yb))[0] * len(yb)
    return total / len(y)
