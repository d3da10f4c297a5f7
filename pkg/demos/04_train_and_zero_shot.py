"""
Training a small restoration model
==================================

A shortened run of the training protocol: generate fingerprints, train on
the blocked-region task, then evaluate on that task and zero-shot on the two
others. The default 300 iterations finish in about a minute on one CPU core.
That is enough to see the loss fall, but not for the region task to beat its
degraded-input baseline. The full-width model at 2000 iterations does (see the
acceptance suite).

Run with ``python demos/04_train_and_zero_shot.py [out_dir] [iterations]``.
"""
import logging
import sys
from pathlib import Path

import numpy as np

from lpwtnet.degradation import NONUNIFORM, REGION, UNIFORM, DegradationSpec
from lpwtnet.evaluation import evaluate, write_report
from lpwtnet.network import ModelConfig
from lpwtnet.plotting import plot_loss
from lpwtnet.scf import GeneratorConfig, generate_dataset
from lpwtnet.training import TrainConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "train"
iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 300

data = generate_dataset(out / "data", GeneratorConfig(), count=60, seed=0)
print("train/test split:", len(data.manifest.train_indices), len(data.manifest.test_indices))

# a slimmer network keeps the demo quick
model_cfg = ModelConfig(low_width=64, mask_width=64, n1=2, n2=1)
train_cfg = TrainConfig.scaled(iterations, batch_size=8, task=DegradationSpec(REGION))
trainer = train(data, model_cfg, train_cfg, out_dir=out / "run")

losses = np.array([r.loss for r in trainer.history])
window = max(1, iterations // 10)
print(f"loss, first {window} its: {losses[:window].mean():.3e}, last {window}: {losses[-window:].mean():.3e}")
plot_loss({"region": trainer.history}, out / "loss.png")

###############################################################################
# In-task and zero-shot evaluation
tasks = [DegradationSpec(NONUNIFORM), DegradationSpec(REGION), DegradationSpec(UNIFORM)]
report = evaluate(out / "run" / "checkpoint", data, tasks)
print(report.table())
zero_shot = evaluate(out / "run" / "checkpoint", data, tasks, zero_shot=True)
print("wrote", write_report(zero_shot, out / "zero_shot"))
