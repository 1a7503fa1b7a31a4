"""Experiment orchestration: build a federation, run a method, write results."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
from pathlib import Path

import numpy as np

from . import nn
from . import rng as rngmod
from .baselines import ProxConfig, run_fedavg, run_fedprox, run_scaffold
from .config import ExperimentConfig
from .data import (Dataset, PartitionSpec, dirichlet_partition, load_mnist_dir,
                   synth_dataset)
from .engine import run_ablation, run_fedcat
from .federation import Federation
from .metrics import CSV_COLUMNS, MetricsLog, atomic_write, rounds_to_threshold

log = logging.getLogger(__name__)

DEFAULT_MNIST_DIR = "data/mnist"


def mnist_dir(config: ExperimentConfig) -> Path:
    return Path(config.data_dir or os.environ.get("SIM_MNIST_DIR") or DEFAULT_MNIST_DIR)


def load_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Return ``(train, test)`` for the configured dataset."""
    if config.dataset == "mnist":
        d = mnist_dir(config)
        if not (d / "train-images-idx3-ubyte").exists():
            raise FileNotFoundError(f"MNIST IDX files not found in {d}")
        return load_mnist_dir(d, "train"), load_mnist_dir(d, "test")
    per_class = config.synth_samples_per_class + config.synth_test_per_class
    data_seed = int(rngmod.stream(config.seed, rngmod.DATA).integers(2**63))
    full = synth_dataset(config.synth_classes, per_class, config.synth_dim, config.synth_spread, data_seed)
    # samples are i.i.d. within a class, so a positional split is a random split
    pos = np.arange(len(full)) % per_class
    train = full.subset(np.flatnonzero(pos < config.synth_samples_per_class))
    test = full.subset(np.flatnonzero(pos >= config.synth_samples_per_class))
    return train, test


def partition_spec(config: ExperimentConfig) -> PartitionSpec:
    part_seed = int(rngmod.stream(config.seed, rngmod.PARTITION).integers(2**63))
    return PartitionSpec(config.num_devices, config.alpha, part_seed)


def build_federation(config: ExperimentConfig, datasets: tuple[Dataset, Dataset] | None = None) -> Federation:
    train, test = datasets or load_datasets(config)
    devices = dirichlet_partition(train, partition_spec(config))
    spec = config.model_spec(train.dim, train.num_classes)
    init = nn.init_params(spec, rngmod.stream(config.seed, rngmod.INIT))
    return Federation(devices, train, test, spec, init, config.seed)


def run_method(config: ExperimentConfig, fed: Federation, selector=None) -> MetricsLog:
    m = config.method
    if m == "fedcat":
        return run_fedcat(config, fed, selector)
    if m == "fedcat_gc":
        return run_ablation(config, fed, "gc", selector)
    if m == "fedcat_dc":
        return run_ablation(config, fed, "dc", selector)
    if m == "fedavg":
        return run_fedavg(config, fed, selector)
    if m == "fedprox":
        return run_fedprox(config, fed, ProxConfig(config.mu), selector)
    if m == "scaffold":
        return run_scaffold(config, fed, selector)
    raise ValueError(m)


def run_experiment(config: ExperimentConfig, out_dir=None, fed: Federation | None = None) -> tuple[MetricsLog, dict]:
    """Run one configured experiment; optionally write ``<stem>.csv`` and ``<stem>.json``."""
    fed = fed or build_federation(config)
    log.info("running %s seed=%d N=%d K=%d rounds=%d", config.method, config.seed,
             config.num_devices, config.num_selected, config.rounds)
    metrics = run_method(config, fed)
    summary = metrics.summary(config.target_accuracy)
    summary["seed"] = config.seed
    summary["config"] = config.to_dict()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{config.method}_seed{config.seed}"
        metrics.write_csv(out / f"{stem}.csv")
        atomic_write(out / f"{stem}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return metrics, summary


def run_suite(template: ExperimentConfig, methods: list[str], seeds: list[int], out_dir=None) -> dict:
    """Cross product of methods and seeds; every method reuses one federation per seed."""
    runs: dict[str, list[tuple[int, MetricsLog, dict]]] = {m: [] for m in methods}
    for seed in seeds:
        base = dataclasses.replace(template, seed=seed)
        fed = build_federation(base)
        for m in methods:
            cfg = ExperimentConfig.from_dict({**base.to_dict(), "method": m})
            metrics, summary = run_experiment(cfg, out_dir, fed)
            runs[m].append((seed, metrics, summary))

    report = {"methods": {}, "seeds": list(seeds)}
    for m, items in runs.items():
        finals = np.array([s["final_accuracy"] for _, _, s in items])
        curve_rounds = items[0][1].rounds
        mean_curve = np.mean([lg.accuracies for _, lg, _ in items], axis=0)
        report["methods"][m] = {
            "final_accuracy_mean": float(finals.mean()),
            "final_accuracy_std": float(finals.std()),
            "best_accuracy_mean": float(np.mean([s["best_accuracy"] for _, _, s in items])),
            "rounds": curve_rounds,
            "mean_accuracy_curve": mean_curve.tolist(),
            "runs": [{k: v for k, v in s.items() if k != "config"} for _, _, s in items],
        }
    if len(methods) == 1 and len(seeds) == 1:
        report["summary"] = runs[methods[0]][0][2]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        atomic_write(out / "merged.csv", merged_csv(runs))
    return report


def merged_csv(runs: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("seed",) + CSV_COLUMNS)
    for items in runs.values():
        for seed, lg, _ in items:
            for r in lg.rows:
                w.writerow([seed, r.round, r.method, repr(r.test_accuracy), repr(r.train_loss),
                            r.bytes_up, r.bytes_down, r.wall_ms])
    return buf.getvalue()


def compare_to_threshold(report: dict, method: str, reference: str) -> dict:
    """How fast ``method`` reaches ``reference``'s mean final accuracy.

    Both are read off the seed-averaged accuracy curves.
    """
    ref = report["methods"][reference]
    cand = report["methods"][method]
    target = ref["mean_accuracy_curve"][-1]
    return {
        "threshold": target,
        "reference_rounds": rounds_to_threshold(ref["rounds"], ref["mean_accuracy_curve"], target),
        "method_rounds": rounds_to_threshold(cand["rounds"], cand["mean_accuracy_curve"], target),
    }
