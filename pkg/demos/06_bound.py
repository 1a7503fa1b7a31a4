# %% [markdown]
# # Convergence bound and its constants
# The bound applies to smooth, strongly convex objectives. We estimate the
# constants on an L2-regularised softmax regression, where the assumptions
# hold, then evaluate the optimality-gap bound over t.

# %%
import numpy as np

from fedsim import nn
from fedsim.data import PartitionSpec, dirichlet_partition, synth_dataset
from fedsim.theory import bound_B, bound_curve, estimate_constants, heterogeneity_gap

data = synth_dataset(4, 100, 6, 0.6, seed=0)
devices = dirichlet_partition(data, PartitionSpec(10, 0.3, seed=0))
spec = nn.ModelSpec(6, (), 4)
w0 = np.zeros(spec.num_params)
c = estimate_constants(spec, w0, devices, budget=400, batch_size=10, rng=np.random.default_rng(0),
                       K=3, E=2, gamma=1.0, l2=0.01)
print({k: round(v, 4) if isinstance(v, float) else v for k, v in c.to_dict().items()})
print("B =", bound_B(c))

# %%
w_star = heterogeneity_gap(spec, devices, l2=0.01)["w_star"]
init = float(np.sum((w0 - w_star) ** 2))
for t, b in zip([1, 10, 100, 1000, 10000], bound_curve(c, [1, 10, 100, 1000, 10000], init)):
    print(f"t={t:<6} gap <= {b:.4g}")
