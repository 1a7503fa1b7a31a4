# %% [markdown]
# # One FedCat cycle by hand
# The global model is copied K times. In round j copy i trains on the
# device at slot dispatch_target(i, j, K), so after K rounds every copy has
# passed through every slot exactly once. Copies are then averaged with
# weights equal to the data they have seen.

# %%
import numpy as np

from fedsim import nn
from fedsim import rng as rngmod
from fedsim.data import synth_dataset, PartitionSpec, dirichlet_partition
from fedsim.engine import GlobalState, aggregate, begin_cycle, dispatch_target, train_iter
from fedsim.federation import TrainConfig

K = 3
print("dispatch table (rows: round, cols: copy -> slot)")
for j in range(1, K + 1):
    print(j, [dispatch_target(i, j, K) for i in range(1, K + 1)])

# %%
data = synth_dataset(4, 60, 6, 0.6, seed=0)
devices = dirichlet_partition(data, PartitionSpec(9, 0.3, seed=0))
spec = nn.ModelSpec(6, (8,), 4)
train = TrainConfig(spec, epochs=2, batch_size=10)
model = nn.init_params(spec, np.random.default_rng(0))
print("initial accuracy:", nn.accuracy(model, spec, data.x, data.y))
cycle = begin_cycle(GlobalState(model), K)
for r, chosen in enumerate([[0, 3, 6], [1, 4, 7], [2, 5, 8]]):
    cycle = train_iter(cycle, chosen, devices, train, [rngmod.train_stream(0, r, d) for d in chosen])
    print(f"after round {r}: accumulated sizes {cycle.d}")
model = aggregate(cycle)
print("after one cycle:", nn.accuracy(model, spec, data.x, data.y))

# %% [markdown]
# Repeating the cycle keeps improving the shared model.

# %%
for c in range(1, 10):
    cycle = begin_cycle(GlobalState(model), K)
    for j, chosen in enumerate([[0, 3, 6], [1, 4, 7], [2, 5, 8]]):
        r = c * K + j
        cycle = train_iter(cycle, chosen, devices, train, [rngmod.train_stream(0, r, d) for d in chosen])
    model = aggregate(cycle)
print("after ten cycles:", nn.accuracy(model, spec, data.x, data.y))
