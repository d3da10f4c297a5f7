"""
Three ways to lose measurements
===============================

Measurement campaigns never cover every cell. Three degradation tasks model
that: random missing entries, a blocked rectangular region, and a regular
sampling grid. Each is a binary mask applied elementwise.

Run with ``python demos/02_degradation_tasks.py [out_dir]``.
"""
import sys
from pathlib import Path

import numpy as np

from lpwtnet.channel import ArrayGeometry, ClusterConfig
from lpwtnet.degradation import NONUNIFORM, REGION, UNIFORM, DegradationSpec, degrade
from lpwtnet.evaluation import nmse
from lpwtnet.plotting import plot_slices
from lpwtnet.scf import GeneratorConfig, GridSpec, generate_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
config = GeneratorConfig(grid=GridSpec(32.0, 32), array=ArrayGeometry(8, 8), clusters=ClusterConfig(), slots=None)
data = generate_dataset(out / "degradation_data", config, count=5, seed=0)
clean = data[0].data

specs = [DegradationSpec(NONUNIFORM, p_m=0.2, seed=1),
         DegradationSpec(REGION, region_size=8, seed=1),
         DegradationSpec(UNIFORM, stride=2)]

###############################################################################
# The degraded tensor itself is the simplest reconstruction. Its NMSE is the
# baseline any model must beat.
panels = {"clean": clean}
for spec in specs:
    observed, mask = degrade(clean, spec)
    kept = mask[..., 0].mean() if spec.task != NONUNIFORM else mask.mean()
    print(f"{spec.name:10s} kept {kept:6.1%}  baseline NMSE {nmse(observed, clean):.3f}")
    panels[spec.name] = observed

###############################################################################
# Masks depend only on the task spec and the sample index, so the training
# loop sees the same mask for a sample in every epoch.
a = degrade(clean, specs[0].for_sample(7))[1]
b = degrade(clean, specs[0].for_sample(7))[1]
print("same mask for the same sample:", bool(np.array_equal(a, b)))

channel = int(np.argmax(clean.sum(axis=(0, 1))))
print("wrote", plot_slices(panels, [channel], out / "degradation_slices.png"))
