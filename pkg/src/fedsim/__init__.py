"""Deterministic federated-learning simulator: FedCat plus FedAvg/FedProx/SCAFFOLD."""

from .config import ExperimentConfig
from .data import Dataset, DeviceDataset, PartitionSpec, dirichlet_partition, load_mnist_idx, synth_dataset
from .engine import aggregate, begin_cycle, dispatch_target, run_ablation, run_fedcat, train_iter
from .baselines import run_fedavg, run_fedprox, run_scaffold
from .harness import build_federation, run_experiment, run_suite
from .metrics import MetricsLog, account_bytes
from .nn import ModelSpec, SgdConfig

__all__ = [
    "ExperimentConfig", "Dataset", "DeviceDataset", "PartitionSpec", "dirichlet_partition",
    "load_mnist_idx", "synth_dataset", "aggregate", "begin_cycle", "dispatch_target",
    "run_ablation", "run_fedcat", "train_iter", "run_fedavg", "run_fedprox", "run_scaffold",
    "build_federation", "run_experiment", "run_suite", "MetricsLog", "account_bytes",
    "ModelSpec", "SgdConfig",
]
