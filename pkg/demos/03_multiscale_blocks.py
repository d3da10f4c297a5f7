"""
Pyramids, wavelets and what they cost
=====================================

The restoration network works on a Laplacian pyramid and mixes space with
wavelet-domain depthwise convolutions. Both transforms are exactly
invertible, and the wavelet trick buys a large receptive field for few FLOPs.

Run with ``python demos/03_multiscale_blocks.py``.
"""
import torch

from lpwtnet.complexity import analytic_flops, measured_flops, model_params, kernel_comparison_example, receptive_field
from lpwtnet.network import ModelConfig, build_model
from lpwtnet.pyramid import lp_decompose, lp_reconstruct
from lpwtnet.wavelet import iwt, wt, wt_cascade

torch.manual_seed(0)
x = torch.rand(1, 64, 32, 32)

###############################################################################
# Laplacian pyramid: residuals at 32, 16, 8 plus a 4x4 low band
decomp = lp_decompose(x, 3)
print("residual sizes:", [tuple(r.shape[-2:]) for r in decomp.residuals], "low:", tuple(decomp.low.shape[-2:]))
print("reconstruction error:", (lp_reconstruct(decomp) - x).abs().max().item())

###############################################################################
# Haar wavelet: four half-resolution subbands, orthonormal
comp = wt(x)
print("energy in/out: %.4f %.4f" % (x.pow(2).sum(), sum(b.pow(2).sum() for b in (comp.ll, comp.lh, comp.hl, comp.hh))))
print("inverse error:", (iwt(comp) - x).abs().max().item())
print("cascade LL sizes:", [tuple(c.ll.shape[-2:]) for c in wt_cascade(x, 3)])

###############################################################################
# Receptive field grows as 2^levels * kernel
for k, levels in [(3, 1), (3, 2), (5, 3)]:
    print(f"kernel {k}, {levels} levels -> {receptive_field(k, levels)} x {receptive_field(k, levels)}")

###############################################################################
# Cost of a 40x40 field on a single 256x256 channel
for name, value in kernel_comparison_example().items():
    print(f"{name:40s} {value:>12,d}")

###############################################################################
# Whole model: analytic count against an instrumented forward pass
for block in ("dswt", "conv"):
    cfg = ModelConfig(block=block)
    counted = measured_flops(build_model(cfg, seed=0), torch.rand(1, 64, 32, 32))
    total = sum(analytic_flops(cfg).values())
    print(f"{block:5s} params {model_params(cfg):>10,d}  FLOPs {total:>12,d}  measured {counted['Global']:>12,d}")
