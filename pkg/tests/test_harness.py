import json

import numpy as np
import pytest

from fedsim.cli import main
from fedsim.config import ExperimentConfig
from fedsim.errors import ConfigError
from fedsim.harness import build_federation, compare_to_threshold, run_experiment, run_suite
from fedsim.metrics import MetricsLog, MetricsRow, account_bytes, rounds_to_threshold


def small(**kw):
    base = dict(dataset="synth", num_devices=12, k=3, rounds=20, eval_every=10, epochs=1,
                batch_size=10, synth_samples_per_class=30, synth_test_per_class=10,
                synth_classes=4, synth_dim=6, hidden_layers=[8], alpha=0.5, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


# --- config ---

def test_config_json_roundtrip(tmp_path):
    c = small(method="fedprox", mu=0.01, epsilon=0.3)
    p = tmp_path / "c.json"
    p.write_text(c.to_json())
    assert ExperimentConfig.from_json_file(p) == c


def test_fedprox_without_mu_names_field():
    with pytest.raises(ConfigError) as exc:
        small(method="fedprox")
    assert exc.value.field == "mu"


@pytest.mark.parametrize("bad", [dict(method="nope"), dict(epsilon=1.5), dict(lam=0),
                                 dict(k=13), dict(alpha=0.0), dict(rounds=0)])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        small(**bad)


def test_overrides_and_aliases():
    c = small().with_overrides(["K=4", "lambda=2", "E=3", "lr=0.05", "hidden=16,16"])
    assert (c.k, c.lam, c.epochs, c.lr, list(c.hidden_layers)) == (4, 2, 3, 0.05, [16, 16])
    with pytest.raises(ConfigError):
        small().with_overrides(["nonsense=1"])


def test_default_selection_is_ten_percent():
    assert ExperimentConfig(num_devices=100).num_selected == 10
    assert ExperimentConfig(num_devices=5).num_selected == 1


# --- metrics ---

def test_account_bytes():
    assert account_bytes("fedavg", 1000, 10) == (80_000, 80_000)
    assert account_bytes("fedcat", 1000, 10) == account_bytes("fedavg", 1000, 10)
    assert account_bytes("scaffold", 1000, 10) == (160_000, 160_000)


def test_rounds_to_threshold_first_crossing():
    assert rounds_to_threshold([0, 10, 20, 30], [0.1, 0.5, 0.4, 0.9], 0.45) == 10
    assert rounds_to_threshold([0, 10], [0.1, 0.2], 0.5) is None


def test_metrics_rows_must_increase():
    lg = MetricsLog("fedavg", {}, {})
    lg.append(MetricsRow(0, "fedavg", 0.1, 1.0, 0, 0, 0))
    with pytest.raises(Exception):
        lg.append(MetricsRow(0, "fedavg", 0.2, 1.0, 0, 0, 0))


@pytest.mark.parametrize("method", ["fedcat", "fedavg"])
def test_eval_cadence(method):
    lg, _ = run_experiment(small(method=method))
    assert lg.rounds == [0, 10, 20]
    assert lg.rows[0].bytes_up == 0
    assert all(0.0 <= a <= 1.0 for a in lg.accuracies)


def test_eval_includes_final_round_off_cadence():
    lg, _ = run_experiment(small(rounds=25))
    assert lg.rounds == [0, 10, 20, 25]


def test_cumulative_bytes_match_accounting():
    c = small(method="fedavg")
    lg, _ = run_experiment(c)
    fed = build_federation(c)
    up, down = account_bytes("fedavg", fed.spec.num_params, 3)
    assert lg.rows[-1].bytes_up == 20 * up and lg.rows[-1].bytes_down == 20 * down


def test_csv_roundtrip(tmp_path):
    lg, _ = run_experiment(small(), tmp_path)
    back = MetricsLog.read_csv(tmp_path / "fedcat_seed3.csv")
    assert back.rows == lg.rows
    assert back.meta == lg.meta


# --- determinism ---

def test_rerun_is_byte_identical(tmp_path, monkeypatch):
    c = small()
    monkeypatch.setenv("SIM_THREADS", "1")
    run_experiment(c, tmp_path / "a")
    monkeypatch.setenv("SIM_THREADS", "8")
    run_experiment(c, tmp_path / "b")
    run_experiment(c, tmp_path / "c")
    a = (tmp_path / "a" / "fedcat_seed3.csv").read_bytes()
    assert a == (tmp_path / "b" / "fedcat_seed3.csv").read_bytes()
    assert a == (tmp_path / "c" / "fedcat_seed3.csv").read_bytes()


def test_selection_knobs_leave_partition_and_init_alone():
    _, a = run_experiment(small(epsilon=0.5))
    _, b = run_experiment(small(epsilon=0.9, lam=2))
    assert a["partition_hash"] == b["partition_hash"]
    assert a["init_hash"] == b["init_hash"]


def test_seed_changes_partition():
    _, a = run_experiment(small(seed=3))
    _, b = run_experiment(small(seed=4))
    assert a["partition_hash"] != b["partition_hash"]


# --- suites ---

def test_single_cell_suite_equals_run(tmp_path):
    c = small()
    report = run_suite(c, ["fedcat"], [3], tmp_path)
    _, summary = run_experiment(c)
    assert report["summary"] == summary
    assert report["methods"]["fedcat"]["final_accuracy_mean"] == summary["final_accuracy"]
    assert report["methods"]["fedcat"]["final_accuracy_std"] == 0.0
    assert json.loads((tmp_path / "report.json").read_text())["seeds"] == [3]


def test_suite_methods_share_federation(tmp_path):
    report = run_suite(small(), ["fedcat", "fedavg"], [3, 4], tmp_path)
    for seed_idx in range(2):
        hashes = {report["methods"][m]["runs"][seed_idx]["partition_hash"] for m in ("fedcat", "fedavg")}
        assert len(hashes) == 1
    merged = (tmp_path / "merged.csv").read_text().splitlines()
    assert merged[0].startswith("seed,round,method")
    assert len(merged) == 1 + 2 * 2 * 3
    cmp = compare_to_threshold(report, "fedcat", "fedavg")
    assert cmp["reference_rounds"] is not None


# --- CLI ---

def test_cli_run(tmp_path, capsys):
    code = main(["run", "--set", "dataset=synth", "--set", "N=12", "--set", "K=3", "--set", "rounds=4",
                 "--set", "eval_every=2", "--set", "synth_samples_per_class=20", "--set", "synth_classes=4",
                 "--out", str(tmp_path)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["method"] == "fedcat" and out["rounds"] == 4
    assert (tmp_path / "fedcat_seed0.csv").exists()


def test_cli_config_error_exit_code(capsys):
    assert main(["run", "--set", "method=fedprox"]) == 2
    assert "mu" in capsys.readouterr().err


def test_cli_suite(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(small(rounds=4, eval_every=2).to_json())
    assert main(["suite", "--config", str(cfg), "--methods", "fedavg,scaffold", "--seeds", "1",
                 "--out", str(tmp_path / "s")]) == 0
    assert set(json.loads((tmp_path / "s" / "report.json").read_text())["methods"]) == {"fedavg", "scaffold"}


def test_cli_bound(tmp_path):
    const = tmp_path / "k.json"
    const.write_text(json.dumps(dict(L=1.0, mu_cvx=1.0, beta_sq=0.0, G_sq=0.0, Gamma=0.0,
                                     gamma=1.0, N=1, K=1, E=1)))
    out = tmp_path / "b.json"
    assert main(["bound", "--constants", str(const), "--init-dist-sq", "2", "--t-max", "100",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["curve"][0] == {"t": 1, "bound": 1.0}
    bounds = [p["bound"] for p in rep["curve"]]
    assert bounds == sorted(bounds, reverse=True)


def test_cli_partition(tmp_path, capsys):
    out = tmp_path / "p.json"
    assert main(["partition", "--dataset", "synth", "--alpha", "0.1", "--devices", "20", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["num_devices"] == 20 and doc["alpha"] == 0.1
    sizes = [len(d) for d in doc["devices"]] if isinstance(doc["devices"][0], list) else None
    assert sizes is None or min(sizes) >= 1


def test_cli_missing_file_exit_code(tmp_path):
    assert main(["bound", "--constants", str(tmp_path / "missing.json")]) == 3


def test_mnist_missing_is_clean_error(tmp_path):
    assert main(["partition", "--dataset", "mnist", "--alpha", "1", "--devices", "5",
                 "--data-dir", str(tmp_path), "--out", str(tmp_path / "p.json")]) in (2, 3)
