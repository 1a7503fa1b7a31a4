"""Communication accounting and the per-run metrics log."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError

BYTES_PER_PARAM = 8
CSV_COLUMNS = ("round", "method", "test_accuracy", "train_loss", "bytes_up", "bytes_down", "wall_ms")

# payload multiplier relative to one model-sized message per device and direction
_PAYLOAD_FACTOR = {
    "fedavg": 1,
    "fedprox": 1,
    "fedcat": 1,
    "fedcat_gc": 1,
    "fedcat_dc": 1,
    "scaffold": 2,  # model + control variate each way
}


def account_bytes(method: str, model_param_count: int, k: int) -> tuple[int, int]:
    """Bytes ``(up, down)`` moved in one round with ``k`` participating devices."""
    if method not in _PAYLOAD_FACTOR:
        raise ConfigError(f"unknown method {method!r}", field="method")
    if model_param_count <= 0 or k <= 0:
        raise ConfigError("param count and K must be positive", field="k")
    per_direction = _PAYLOAD_FACTOR[method] * k * model_param_count * BYTES_PER_PARAM
    return per_direction, per_direction


@dataclass
class MetricsRow:
    round: int
    method: str
    test_accuracy: float
    train_loss: float
    bytes_up: int
    bytes_down: int
    wall_ms: int = 0


@dataclass
class MetricsLog:
    method: str
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    rows: list[MetricsRow] = field(default_factory=list)
    final_model: np.ndarray | None = field(default=None, repr=False, compare=False)

    def append(self, row: MetricsRow) -> None:
        if not 0.0 <= row.test_accuracy <= 1.0:
            raise ValueError("accuracy outside [0, 1]")
        if self.rows and row.round <= self.rows[-1].round:
            raise ValueError("metrics rounds must be strictly increasing")
        self.rows.append(row)

    @property
    def rounds(self) -> list[int]:
        return [r.round for r in self.rows]

    @property
    def accuracies(self) -> list[float]:
        return [r.test_accuracy for r in self.rows]

    def final_accuracy(self) -> float:
        return self.rows[-1].test_accuracy

    def best_accuracy(self) -> float:
        return max(self.accuracies)

    def rounds_to_threshold(self, threshold: float) -> int | None:
        return rounds_to_threshold(self.rounds, self.accuracies, threshold)

    def summary(self, threshold: float | None = None) -> dict:
        last = self.rows[-1]
        out = {
            "method": self.method,
            "final_accuracy": last.test_accuracy,
            "best_accuracy": self.best_accuracy(),
            "final_train_loss": last.train_loss,
            "rounds": last.round,
            "total_bytes_up": last.bytes_up,
            "total_bytes_down": last.bytes_down,
            "rounds_to_threshold": None,
            "threshold": threshold,
        }
        if threshold is not None:
            out["rounds_to_threshold"] = self.rounds_to_threshold(threshold)
        out.update({k: v for k, v in self.meta.items() if k.endswith("_hash")})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(self.config, sort_keys=True) + "\n")
        buf.write("# meta: " + json.dumps(self.meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.round, r.method, repr(r.test_accuracy), repr(r.train_loss),
                        r.bytes_up, r.bytes_down, r.wall_ms])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        atomic_write(path, self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "MetricsLog":
        config, meta, body = {}, {}, []
        with open(path) as f:
            for line in f:
                if line.startswith("# config: "):
                    config = json.loads(line[len("# config: "):])
                elif line.startswith("# meta: "):
                    meta = json.loads(line[len("# meta: "):])
                else:
                    body.append(line)
        rows = list(csv.DictReader(body))
        log = cls(rows[0]["method"] if rows else config.get("method", ""), config, meta)
        for r in rows:
            log.append(MetricsRow(int(r["round"]), r["method"], float(r["test_accuracy"]),
                                  float(r["train_loss"]), int(r["bytes_up"]),
                                  int(r["bytes_down"]), int(r["wall_ms"])))
        return log


def rounds_to_threshold(rounds, accuracies, threshold: float) -> int | None:
    """First logged round whose accuracy reaches ``threshold``."""
    for r, a in zip(rounds, accuracies):
        if a >= threshold:
            return int(r)
    return None


def atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


class Recorder:
    """Evaluates the global model on the logging cadence and tracks traffic.

    A row is written at round 0 (before any training), whenever the number of
    completed rounds is a multiple of ``eval_every``, and after the last round.
    """

    def __init__(self, method: str, spec: nn.ModelSpec, eval_set, train_x, train_y,
                 k: int, eval_every: int, total_rounds: int, timing: bool = False):
        self.log = MetricsLog(method)
        self.method = method
        self.spec = spec
        self.eval_set = eval_set
        self.train_x = train_x
        self.train_y = train_y
        self.eval_every = eval_every
        self.total_rounds = total_rounds
        self.timing = timing
        self._per_round = account_bytes(method, spec.num_params, k)
        self._up = 0
        self._down = 0
        self._t0 = time.perf_counter()

    def _row(self, completed: int, model: np.ndarray) -> None:
        acc = nn.accuracy(model, self.spec, self.eval_set.x, self.eval_set.y)
        loss = nn.mean_loss(model, self.spec, self.train_x, self.train_y)
        wall = int((time.perf_counter() - self._t0) * 1000) if self.timing else 0
        self.log.append(MetricsRow(completed, self.method, acc, loss, self._up, self._down, wall))

    def start(self, model: np.ndarray) -> None:
        self._row(0, model)

    def end_round(self, completed: int, model: np.ndarray) -> None:
        up, down = self._per_round
        self._up += up
        self._down += down
        if completed % self.eval_every == 0 or completed == self.total_rounds:
            self._row(completed, model)
