"""Command-line entry point: ``sim run|suite|bound|partition``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import ExperimentConfig
from .data import mean_label_entropy, save_partition, dirichlet_partition
from .errors import SimError
from .harness import load_datasets, partition_spec, run_experiment, run_suite
from .metrics import atomic_write
from .theory import TheoryConstants, bound_B, bound_curve


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(args.set or [])


def cmd_run(args) -> int:
    cfg = _load_config(args)
    _, summary = run_experiment(cfg, args.out)
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2, sort_keys=True))
    return 0


def cmd_suite(args) -> int:
    cfg = _load_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    for m in methods:
        ExperimentConfig.from_dict({**cfg.to_dict(), "method": m})
    report = run_suite(cfg, methods, seeds, args.out)
    for m, r in report["methods"].items():
        print(f"{m:10s} final accuracy {r['final_accuracy_mean']:.4f} +- {r['final_accuracy_std']:.4f}")
    return 0


def cmd_bound(args) -> int:
    with open(args.constants) as f:
        raw = json.load(f)
    c = TheoryConstants.from_dict(raw)
    init = float(raw.get("init_dist_sq", args.init_dist_sq))
    ts = np.unique(np.geomspace(1, args.t_max, args.points).round().astype(int)).tolist()
    report = {
        "constants": c.to_dict(),
        "init_dist_sq": init,
        "B": bound_B(c),
        "curve": [{"t": t, "bound": b} for t, b in zip(ts, bound_curve(c, ts, init))],
    }
    text = json.dumps(report, indent=2)
    if args.out:
        atomic_write(args.out, text + "\n")
    else:
        print(text)
    return 0


def cmd_partition(args) -> int:
    cfg = ExperimentConfig(dataset=args.dataset, num_devices=args.devices, alpha=args.alpha,
                           seed=args.seed, data_dir=args.data_dir)
    train, _ = load_datasets(cfg)
    spec = partition_spec(cfg)
    devices = dirichlet_partition(train, spec)
    save_partition(args.out, devices, spec)
    sizes = [d.n for d in devices]
    print(f"wrote {args.out}: {len(devices)} devices, sizes {min(sizes)}..{max(sizes)}, "
          f"mean label entropy {mean_label_entropy(devices):.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Federated learning simulator (FedCat and baselines)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
    r.add_argument("--out", default="runs", help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="methods x seeds comparison")
    s.add_argument("--config", help="JSON config template")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--methods", required=True, help="comma-separated methods")
    s.add_argument("--seeds", required=True, help="comma-separated seeds")
    s.add_argument("--out", default="runs/suite")
    s.set_defaults(func=cmd_suite)

    b = sub.add_parser("bound", help="evaluate the convergence bound")
    b.add_argument("--constants", required=True, help="JSON file with L, mu_cvx, beta_sq, G_sq, Gamma, gamma, N, K, E")
    b.add_argument("--init-dist-sq", type=float, default=1.0)
    b.add_argument("--t-max", type=int, default=10000)
    b.add_argument("--points", type=int, default=50)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bound)

    pt = sub.add_parser("partition", help="write a Dirichlet partition cache")
    pt.add_argument("--dataset", choices=("mnist", "synth"), default="mnist")
    pt.add_argument("--alpha", type=float, required=True)
    pt.add_argument("--devices", type=int, required=True)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--data-dir")
    pt.add_argument("--out", required=True)
    pt.set_defaults(func=cmd_partition)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimError as exc:
        field = getattr(exc, "field", None)
        print(f"error: {exc}" + (f" [field: {field}]" if field else ""), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
