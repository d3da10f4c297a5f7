"""Analytic complexity model: FLOPs, parameters and receptive field.

One multiply-accumulate counts as one FLOP throughout. Counted: every
convolution (learned or fixed-filter, including the pyramid's Gaussian
filtering and the Haar transforms) and the attention matrix products.
Elementwise ops, normalization, activations and interpolation are free.
"""
from __future__ import annotations

from collections import OrderedDict

import torch
from torch.utils.flop_counter import FlopCounterMode

from .network import ModelConfig

GAUSS_TAPS = 25


def _out_size(size: int, k: int, padding: int, stride: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ValueError(f"non-integral output size for size={size}, k={k}, P={padding}, S={stride}")
    return span // stride + 1


def flops_dwconv(channels: int, height: int, width: int, kernel_size: int,
                 padding: int = 0, stride: int = 1) -> int:
    """Depthwise convolution cost ``C * H_out * W_out * k^2``."""
    h_out = _out_size(height, kernel_size, padding, stride)
    w_out = _out_size(width, kernel_size, padding, stride)
    return channels * h_out * w_out * kernel_size**2


def _quarter(hw: int, i: int) -> int:
    if hw % 4**i:
        raise ValueError(f"H*W={hw} not divisible by 4^{i}")
    return hw // 4**i


def flops_wtconv(channels: int, height: int, width: int, kernel_size: int, levels: int) -> tuple[int, int]:
    """``(convolution, transform)`` cost of an ``levels``-level WTConv.

    Convolutions: ``C k^2 (HW + sum_{i=1..l} 4 HW / 4^i)``.
    Transforms (WT plus IWT): ``2 * 4C * sum_{i=0..l-1} HW / 4^i``.
    """
    hw = height * width
    conv = channels * kernel_size**2 * (hw + sum(4 * _quarter(hw, i) for i in range(1, levels + 1)))
    transform = 2 * 4 * channels * sum(_quarter(hw, i) for i in range(levels))
    return conv, transform


def receptive_field(kernel_size: int, levels: int) -> int:
    return 2**levels * kernel_size


# --- whole-model accounting ----------------------------------------------------

def _conv_params(c_in, c_out, k, bias=True):
    return c_out * c_in * k * k + (c_out if bias else 0)


def wtconv_params(channels: int, kernel_size: int, levels: int, per_subband_scale: bool = False) -> int:
    k2 = kernel_size**2
    return channels * k2 + levels * 4 * channels * k2 + 1 + levels * (4 if per_subband_scale else 1)


def _block_params(width: int, cfg: ModelConfig) -> int:
    if cfg.block == "dswt":
        spatial = wtconv_params(width, cfg.kernel_size, cfg.wt_levels, cfg.per_subband_scale)
        spatial += _conv_params(width, width, 1)
    else:
        spatial = _conv_params(width, width, 3)
        if cfg.block == "conv_sa":
            spatial += 4 * _conv_params(width, width, 1)
    return spatial + _conv_params(width, width, 3)


def analytic_params(cfg: ModelConfig) -> "OrderedDict[str, int]":
    c, wl, wm, levels = cfg.channels, cfg.low_width, cfg.mask_width, cfg.pyramid_levels
    parts = OrderedDict()
    parts["pyramid"] = 0
    parts["low_branch"] = (_conv_params(c, wl, 3) + 2 * wl + _conv_params(wl, wl, 3)
                           + cfg.n1 * _block_params(wl, cfg)
                           + _conv_params(wl, wl, 3) + _conv_params(wl, c, 3))
    parts["mask_branch"] = (_conv_params(3 * c, wm, 3) + cfg.n2 * _block_params(wm, cfg)
                            + _conv_params(wm, c, 3))
    parts["fine_tune"] = levels * 2 * _conv_params(c, c, 1)
    parts["mask_adjust"] = (levels - 1) * _conv_params(c, c, 3)
    return parts


def _block_flops(width: int, hw: int, h: int, w: int, cfg: ModelConfig) -> int:
    full3 = hw * width * width * 9
    if cfg.block == "dswt":
        conv, transform = flops_wtconv(width, h, w, cfg.kernel_size, cfg.wt_levels)
        spatial = conv + transform + hw * width * width
    else:
        spatial = full3
        if cfg.block == "conv_sa":
            spatial += 4 * hw * width * width + 2 * hw * hw * width
    return spatial + full3


def analytic_flops(cfg: ModelConfig, height: int = 32, width: int = 32) -> "OrderedDict[str, int]":
    """Per-component forward MACs for one (C, H, W) sample."""
    c, wl, wm, levels = cfg.channels, cfg.low_width, cfg.mask_width, cfg.pyramid_levels
    sizes = [(height // 2**l, width // 2**l) for l in range(levels + 1)]
    areas = [h * w for h, w in sizes]
    parts = OrderedDict()
    # decomposition: smooth + expand per level; reconstruction: expand per level
    parts["pyramid"] = 3 * GAUSS_TAPS * c * sum(areas[:levels])

    h, w = sizes[levels]
    a = areas[levels]
    parts["low_branch"] = (a * wl * c * 9 + a * wl * wl * 9 + cfg.n1 * _block_flops(wl, a, h, w, cfg)
                           + a * wl * wl * 9 + a * c * wl * 9)
    h, w = sizes[levels - 1]
    a = areas[levels - 1]
    parts["mask_branch"] = (a * wm * 3 * c * 9 + cfg.n2 * _block_flops(wm, a, h, w, cfg)
                            + a * c * wm * 9)
    parts["fine_tune"] = sum(2 * a * c * c for a in areas[:levels])
    parts["mask_adjust"] = sum(9 * a * c * c for a in areas[:levels - 1])
    return parts


def param_count(model: torch.nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def model_flops(cfg: ModelConfig, height: int = 32, width: int = 32) -> int:
    return sum(analytic_flops(cfg, height, width).values())


def model_params(cfg: ModelConfig) -> int:
    return sum(analytic_params(cfg).values())


def measured_flops(model: torch.nn.Module, x: torch.Tensor) -> dict:
    """MACs per sample measured by running ``model`` under torch's FLOP counter.

    Returns ``{module path: MACs}``; the ``"Global"`` entry is the total.
    """
    counter = FlopCounterMode(display=False)
    with torch.no_grad(), counter:
        model(x)
    batch = x.shape[0]
    return {name: sum(ops.values()) // (2 * batch) for name, ops in counter.get_flop_counts().items()}


def kernel_comparison_example() -> "OrderedDict[str, int]":
    """The single-channel 256x256 comparison of large kernels and WTConv."""
    conv, transform = flops_wtconv(1, 256, 256, 5, 3)
    return OrderedDict([
        ("dwconv 11x11", flops_dwconv(1, 256, 256, 11, 5, 1)),
        ("dwconv 31x31", flops_dwconv(1, 256, 256, 31, 15, 1)),
        ("wtconv 5x5, 3 levels: convolutions", conv),
        ("wtconv 5x5, 3 levels: WT + IWT", transform),
        ("wtconv 5x5, 3 levels: total", conv + transform),
    ])
