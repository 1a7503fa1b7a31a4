# %% [markdown]
# # Count-based device selection
# Devices are split into K groups. Each round one device is drawn per group,
# favouring devices that have rarely filled the current cycle slot.
# Weights are 1/sqrt(count); a never-used device has infinite weight.

# %%
import numpy as np

from fedsim.selection import GroupedCountSelector, SelectionPolicy

sel = GroupedCountSelector(num_devices=12, k=3, policy=SelectionPolicy(epsilon=0.5, lam=4),
                           grouping_rng=np.random.default_rng(0), selection_rng=np.random.default_rng(1))
print("groups:", sel.groups.groups if sel.groups else "formed on first call")
for r in range(9):
    print(f"round {r}: {sel.select(r)}")
print("count table (device x slot):")
print(sel.table.counts)

# %% [markdown]
# After nine rounds every cell of a four-device group has been filled at
# most once per slot before any cell is reused: exploration first.

# %%
print("max count per slot:", sel.table.counts.max(axis=0))
