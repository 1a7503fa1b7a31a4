# %% [markdown]
# # Local training from scratch
# A two-layer MLP lives in one flat float64 vector. `local_train` runs
# momentum SGD for a few epochs and returns the displacement from the
# starting point, which is what a device uploads.

# %%
import numpy as np

from fedsim import nn
from fedsim.data import synth_dataset

data = synth_dataset(num_classes=4, samples_per_class=100, dim=8, spread=0.6, seed=0)
spec = nn.ModelSpec(input_dim=8, hidden_layers=(16,), num_classes=4)
w = nn.init_params(spec, np.random.default_rng(0))
print("parameters:", spec.num_params)
print("accuracy before:", nn.accuracy(w, spec, data.x, data.y))

# %% [markdown]
# A device here is just an index view into the pooled dataset.

# %%
from fedsim.data import DeviceDataset

device = DeviceDataset(0, np.arange(len(data)), data)
delta, n = nn.local_train(w, spec, device, epochs=5, batch_size=20,
                          opt=nn.SgdConfig(0.05, 0.9), rng=np.random.default_rng(1))
print(f"trained on {n} samples, |delta| = {np.linalg.norm(delta):.3f}")
print("accuracy after:", nn.accuracy(w + delta, spec, data.x, data.y))
