"""Convergence-bound calculator and empirical probes of its assumptions.

The bound is

    E[F(w_t)] - F* <= L / (mu * (gamma + t - 1)) * (2B/mu + mu*gamma/2 * ||w_1 - w*||^2)
    B = beta^2 / N + 6 L Gamma + 8 (K E - 1)^2 G^2

It assumes every local objective is L-smooth and mu-strongly convex, which the
MLP is not. The probes below therefore report diagnostics only; ``Gamma`` and
a strong-convexity constant are meaningful only for the convex surrogate
(softmax regression with an L2 penalty, see :func:`convex_objective`).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from . import nn
from .errors import ConfigError


@dataclass
class TheoryConstants:
    L: float
    mu_cvx: float
    beta_sq: float
    G_sq: float
    Gamma: float
    gamma: float
    N: int
    K: int
    E: int

    def __post_init__(self):
        for name in ("L", "mu_cvx", "beta_sq", "G_sq", "Gamma", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError(f"{name} must be finite", field=name)
            if v < 0:
                raise ConfigError(f"{name} must be non-negative", field=name)
        if self.L < self.mu_cvx:
            raise ConfigError("smoothness L must be >= strong convexity mu", field="L")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TheoryConstants":
        fields = ("L", "mu_cvx", "beta_sq", "G_sq", "Gamma", "gamma", "N", "K", "E")
        missing = [f for f in fields if f not in raw]
        if missing:
            raise ConfigError(f"missing constants: {', '.join(missing)}", field=missing[0])
        return cls(**{f: raw[f] for f in fields})


def bound_B(c: TheoryConstants) -> float:
    if c.N <= 0:
        raise ConfigError("N must be positive", field="N")
    return c.beta_sq / c.N + 6.0 * c.L * c.Gamma + 8.0 * (c.K * c.E - 1) ** 2 * c.G_sq


def bound_gap(c: TheoryConstants, t: int, init_dist_sq: float) -> float:
    """Right-hand side of the optimality-gap bound after ``t`` aggregations."""
    if c.mu_cvx <= 0:
        raise ConfigError("the bound requires strong convexity (mu > 0)", field="mu_cvx")
    if c.gamma <= 0:
        raise ConfigError("gamma must be positive", field="gamma")
    if t < 1:
        raise ConfigError("t must be >= 1", field="t")
    mu = c.mu_cvx
    return c.L / (mu * (c.gamma + t - 1)) * (2.0 * bound_B(c) / mu + 0.5 * mu * c.gamma * init_dist_sq)


def bound_curve(c: TheoryConstants, ts, init_dist_sq: float) -> list[float]:
    return [bound_gap(c, int(t), init_dist_sq) for t in ts]


# --- convex surrogate -------------------------------------------------------

def convex_objective(spec: nn.ModelSpec, l2: float):
    """Mean cross-entropy plus ``(l2/2)||w||^2``; needs a model without hidden layers.

    For softmax regression this is ``l2``-strongly convex.
    """
    if spec.hidden_layers:
        raise ConfigError("the convex surrogate must have no hidden layers", field="hidden_layers")
    if l2 <= 0:
        raise ConfigError("l2 must be positive for strong convexity", field="l2")

    def f(w, x, y):
        loss, grad = nn.loss_and_grad(w, spec, (x, y))
        return loss + 0.5 * l2 * float(w @ w), grad + l2 * w

    return f


def _minimize(objective, x, y, w0, tol):
    # gtol bounds the largest component; scale it so the 2-norm meets tol
    f = lambda w: objective(w, x, y)
    opts = {"gtol": tol / np.sqrt(w0.size), "ftol": 0.0, "maxiter": 20000, "maxcor": 30}
    w = w0
    for _ in range(5):  # restarts recover from line-search stalls near the optimum
        res = minimize(f, w, jac=True, method="L-BFGS-B", options=opts)
        w = res.x
        gnorm = float(np.linalg.norm(res.jac))
        if gnorm < tol:
            break
    return w, float(res.fun), gnorm


def heterogeneity_gap(spec: nn.ModelSpec, devices, l2: float, tol: float = 1e-6) -> dict:
    """``Gamma = F* - sum_k p_k f_k*`` for the convex surrogate.

    Each device objective and the sample-weighted global objective are
    minimised until the gradient norm is below ``tol``.
    """
    obj = convex_objective(spec, l2)
    n = np.array([d.n for d in devices], dtype=np.float64)
    p = n / n.sum()
    w0 = np.zeros(spec.num_params)
    local_opt = []
    worst = 0.0
    for d in devices:
        _, fk, g = _minimize(obj, d.x, d.y, w0, tol)
        local_opt.append(fk)
        worst = max(worst, g)
    x = np.concatenate([d.x for d in devices])
    y = np.concatenate([d.y for d in devices])
    # the pooled mean loss is exactly the sample-weighted average of device losses
    w_star, f_star, g = _minimize(obj, x, y, w0, tol)
    worst = max(worst, g)
    gamma = max(0.0, f_star - float(p @ np.array(local_opt)))
    return {"Gamma": gamma, "F_star": f_star, "w_star": w_star, "max_grad_norm": worst}


# --- probes -----------------------------------------------------------------

@dataclass
class ProbeReport:
    beta_sq: float
    G_sq: float
    L: float
    per_device: list[dict]
    evaluations: int


def _grad_fn(spec, l2):
    if l2 > 0:
        obj = convex_objective(spec, l2)
        return lambda w, x, y: obj(w, x, y)[1]
    return lambda w, x, y: nn.loss_and_grad(w, spec, (x, y))[1]


def probe_constants(spec: nn.ModelSpec, model, devices, budget: int, batch_size: int,
                    rng: np.random.Generator, num_devices: int | None = None,
                    l2: float = 0.0, radius: float = 1e-2) -> ProbeReport:
    """Monte Carlo estimates of beta^2, G^2 and L at ``model``.

    ``budget`` stochastic gradients are split evenly over ``num_devices`` sampled
    devices (all by default). For each device, mini-batches of ``batch_size``
    drawn without replacement give ``mean ||g - grad f_k||^2`` and
    ``mean ||g||^2``; beta^2 and G^2 are the maxima over devices. L is the largest
    ``||grad f_k(a) - grad f_k(b)|| / ||a - b||`` over random pairs within
    ``radius`` of ``model``, using full-batch device gradients.
    """
    if budget < 100:
        raise ConfigError("probe budget must be at least 100 gradient evaluations", field="budget")
    grad = _grad_fn(spec, l2)
    pool = list(devices)
    m = len(pool) if num_devices is None else min(num_devices, len(pool))
    chosen = [pool[i] for i in sorted(rng.choice(len(pool), size=m, replace=False))]
    per = max(1, budget // (2 * m))  # half the budget for moments, half for L pairs
    beta_sq = G_sq = L = 0.0
    rows = []
    evals = 0
    for d in chosen:
        full = grad(model, d.x, d.y)
        bs = min(batch_size, d.n)
        dev_sq = sq = 0.0
        gsum = np.zeros_like(full)
        for _ in range(per):
            idx = rng.choice(d.n, size=bs, replace=False)
            g = grad(model, d.x[idx], d.y[idx])
            gsum += g
            dev_sq += float(np.sum((g - full) ** 2))
            sq += float(g @ g)
        evals += per
        b_k, g_k = dev_sq / per, sq / per
        l_k = 0.0
        for _ in range(per):
            a = model + radius * rng.standard_normal(model.shape) / np.sqrt(model.size)
            b = model + radius * rng.standard_normal(model.shape) / np.sqrt(model.size)
            ga, gb = grad(a, d.x, d.y), grad(b, d.x, d.y)
            l_k = max(l_k, float(np.linalg.norm(ga - gb) / np.linalg.norm(a - b)))
        evals += 2 * per
        rows.append({"device": d.device_id, "beta_sq": b_k, "G_sq": g_k,
                     "full_grad_sq": float(full @ full), "mean_batch_grad": gsum / per, "L": l_k})
        beta_sq, G_sq, L = max(beta_sq, b_k), max(G_sq, g_k), max(L, l_k)
    return ProbeReport(beta_sq, G_sq, L, rows, evals)


def estimate_constants(spec: nn.ModelSpec, model, devices, budget: int, batch_size: int,
                       rng: np.random.Generator, K: int, E: int, gamma: float,
                       l2: float = 0.0, Gamma: float | None = None) -> TheoryConstants:
    """Bundle probe estimates into :class:`TheoryConstants`.

    With ``l2 > 0`` on a hidden-layer-free spec, mu is ``l2`` and Gamma is
    computed by :func:`heterogeneity_gap` unless given. Otherwise mu and Gamma
    are reported as 0 (the assumptions do not hold) unless ``Gamma`` is supplied.
    """
    rep = probe_constants(spec, model, devices, budget, batch_size, rng, l2=l2)
    convex = l2 > 0 and not spec.hidden_layers
    if Gamma is None:
        Gamma = heterogeneity_gap(spec, devices, l2)["Gamma"] if convex else 0.0
    mu = l2 if convex else 0.0
    return TheoryConstants(L=max(rep.L, mu), mu_cvx=mu, beta_sq=rep.beta_sq, G_sq=rep.G_sq,
                           Gamma=Gamma, gamma=gamma, N=len(devices), K=K, E=E)
