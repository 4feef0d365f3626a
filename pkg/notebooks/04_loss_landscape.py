"""
Loss landscapes around trained weights
======================================

Train a small MLP, then walk along a filter-normalized random direction and
evaluate the loss with FP32, HBFP6 and HBFP4 arithmetic.
"""

from hbfp.analysis import landscape
from hbfp.core import QuantConfig
from hbfp.training import DatasetSpec, TrainConfig, evaluate, load_model, make_dataset, train

cfg = TrainConfig(epochs=20, lr_decay_epochs=(10, 15), hidden=(32, 32),
                  dataset=DatasetSpec(kind="gaussians", classes=4, noise=1.0,
                                      n_train=1024, n_val=512))
report = train(cfg, checkpoint="/tmp/landscape_demo.hbc")
print("FP32 model, final val acc", report.final_val_acc)

model, _ = load_model(report.checkpoint)
_, _, xv, yv = make_dataset(cfg.dataset, cfg.seed)

# %%
# Same direction (seed 0) for every numeric format.
for label, qc in (("fp32", None), ("hbfp6", QuantConfig(6, 64)), ("hbfp4", QuantConfig(4, 64))):
    cfgs = [qc] * len(model.layers)
    grid = landscape(model.params(), lambda p: evaluate(model.with_params(p), xv, yv, cfgs)[0],
                     steps=11, seed=0)
    curve = " ".join(f"{v:6.2f}" for v in grid.values()[:, 0])
    print(f"{label:6s} log-loss: {curve}")
