"""
Accuracy Booster on a desk-sized problem
========================================

HBFP4 everywhere, except HBFP6 in the first and last layers and in the last
epoch. Compare against FP32, HBFP6 and plain HBFP4 over a few seeds. This
takes a few minutes on one CPU core.
"""

import numpy as np

from hbfp.core import QuantConfig
from hbfp.training import NumericMode, TrainConfig, train

modes = {
    "fp32": NumericMode(),
    "hbfp6": NumericMode("hbfp", QuantConfig(6, 64)),
    "hbfp4": NumericMode("hbfp", QuantConfig(4, 64)),
    "booster": NumericMode("booster"),
}
seeds = [0, 1, 2]

# %%
results = {}
for name, mode in modes.items():
    results[name] = [train(TrainConfig(numeric=mode, seed=s)) for s in seeds]
    accs = [r.final_val_acc for r in results[name]]
    print(f"{name:8s} mean val acc {np.mean(accs):6.2f}  per seed {np.round(accs, 2).tolist()}")

# %%
# The boosted final epoch: validation accuracy before and after.
for r in results["booster"]:
    before, after = r.curves[-2], r.curves[-1]
    print(f"seed {r.seed}: {before.val_acc:.2f} ({before.active_cfg}) -> "
          f"{after.val_acc:.2f} ({after.active_cfg})")

# %%
print("HBFP4 share of training MACs:", round(results["booster"][0].mac_fraction["hbfp4"], 4))
