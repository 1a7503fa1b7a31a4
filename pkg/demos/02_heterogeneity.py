# %% [markdown]
# # Dirichlet partitions
# Smaller alpha concentrates each device on fewer classes. Mean label
# entropy per device summarises how skewed a partition is.

# %%
from fedsim.data import PartitionSpec, dirichlet_partition, mean_label_entropy, synth_dataset

data = synth_dataset(10, 500, 32, 0.6, seed=0)
for alpha in (0.05, 0.1, 0.5, 1.0, 100.0):
    devices = dirichlet_partition(data, PartitionSpec(100, alpha, seed=0))
    sizes = [d.n for d in devices]
    print(f"alpha={alpha:<6} entropy={mean_label_entropy(devices):.3f} nats  sizes {min(sizes)}..{max(sizes)}")

# %% [markdown]
# One device's label histogram at alpha=0.1:

# %%
devices = dirichlet_partition(data, PartitionSpec(100, 0.1, seed=0))
print(devices[0].label_counts())
