"""
Building a statistical channel fingerprint
==========================================

A base station with an 8x8 planar array serves a 32 m x 32 m area split into
32x32 cells. For every cell we need the channel power angular spectrum: how
much power arrives from each of the 64 DFT beams. Stacking those vectors gives
a 32x32x64 fingerprint tensor.

Run with ``python demos/01_channel_fingerprint.py [out_dir]``.
"""
import sys
from pathlib import Path

import numpy as np

from lpwtnet.channel import (ArrayGeometry, ClusterConfig, cscm_from_pas, extract_cpas, measure_cpas_field,
                             sample_channels, sample_covariance, steering_basis, synth_pas_field)
from lpwtnet.plotting import plot_slices
from lpwtnet.scf import GridSpec, build_scf, normalize

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

array = ArrayGeometry(8, 8)
basis = steering_basis(array)  # Kronecker DFT basis, columns are beams
grid = GridSpec(32.0, 32)

# The DFT beams are orthogonal: A^H A = N I
gram = basis.matrix.conj().T @ basis.matrix
print("basis orthogonality error:", np.abs(gram - 64 * np.eye(64)).max())

###############################################################################
# Per-cell spectra from the synthetic cluster generator
field = synth_pas_field(grid, array, ClusterConfig(), seed=0)
print("base station at", np.round(field.bs_position, 1), "m")
print("gain range: %.3g .. %.3g" % (field.gains.min(), field.gains.max()))

###############################################################################
# From spectrum to covariance and back
#
# On the DFT basis the beam-diagonal of the covariance recovers the spectrum
# exactly. With a finite number of slots the estimate is noisy.
cell = field.cell(16, 16)
omega = cscm_from_pas(basis, cell)
exact = extract_cpas(basis, omega)
print("round-trip error:", np.abs(exact - cell.scaled).max())
for slots in (64, 1024, 16384):
    est = extract_cpas(basis, sample_covariance(sample_channels(basis, cell, slots, seed=1)))
    print(f"{slots:6d} slots: relative spectrum error {np.linalg.norm(est - exact) / np.linalg.norm(exact):.3f}")

###############################################################################
# The fingerprint tensor, measured with 64 slots per cell
scf = build_scf(grid, measure_cpas_field(basis, field, slots=64, seed=2))
norm = normalize(scf, (scf.data.min(), scf.data.max()))
print("fingerprint shape", scf.shape, "normalized RMS %.3f" % np.sqrt((norm.data**2).mean()))

strongest = np.argsort(norm.data.sum(axis=(0, 1)))[::-1][:3]
path = plot_slices({"fingerprint": norm.data}, list(strongest), out / "fingerprint_slices.png")
print("wrote", path)
