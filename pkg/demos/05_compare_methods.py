# %% [markdown]
# # FedCat against the baselines
# A reduced synthetic run (30 devices, 60 rounds) so the script finishes in
# seconds. Every method shares one partition and one initial model.

# %%
from fedsim.config import ExperimentConfig
from fedsim.harness import compare_to_threshold, run_suite

template = ExperimentConfig(dataset="synth", num_devices=30, k=3, rounds=60, eval_every=5,
                            alpha=0.1, mu=0.01)
report = run_suite(template, ["fedcat", "fedcat_gc", "fedcat_dc", "fedavg", "fedprox", "scaffold"], seeds=[0])
for method, r in report["methods"].items():
    bytes_up = r["runs"][0]["total_bytes_up"]
    print(f"{method:10s} final {r['final_accuracy_mean']:.4f}  uploaded {bytes_up / 1e6:.1f} MB")

# %% [markdown]
# Rounds until each method first matches FedAvg's final accuracy:

# %%
for method in report["methods"]:
    print(method, compare_to_threshold(report, method, "fedavg")["method_rounds"])
