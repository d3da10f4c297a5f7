"""LPWTNet: Laplacian-pyramid restoration network with WTConv residual blocks
and a shared, level-wise refined mask for the high-frequency residuals.

Input and output are (B, C, H, W) with H, W divisible by ``2**pyramid_levels``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .pyramid import PyramidDecomposition, lp_decompose, lp_reconstruct
from .wavelet import WTConv

BLOCK_VARIANTS = ("dswt", "conv", "conv_sa")


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 64
    pyramid_levels: int = 3
    wt_levels: int = 2
    kernel_size: int = 3
    n1: int = 5
    n2: int = 3
    low_width: int = 128
    mask_width: int = 128
    block: str = "dswt"
    negative_slope: float = 0.2
    per_subband_scale: bool = False
    zero_init_residual: bool = False  # opt-in: identity map at init

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("n1 and n2 must be >= 1")
        if self.low_width < self.channels or self.mask_width < self.channels:
            raise ValueError("hidden widths must be >= channels")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if self.block not in BLOCK_VARIANTS:
            raise ValueError(f"block must be one of {BLOCK_VARIANTS}")

    def to_dict(self) -> dict:
        return asdict(self)

    def check_input(self, shape) -> None:
        h, w = shape[-2:]
        if shape[-3] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {shape[-3]}")
        # the top residual level (H / 2^(L-1)) and the low band (H / 2^L) both feed WTConv
        need = 2 ** (self.pyramid_levels + (self.wt_levels if self.block == "dswt" else 0))
        if h % need or w % need:
            raise ValueError(f"spatial size {h}x{w} must be divisible by {need} for this config")


def conv3x3(c_in: int, c_out: int) -> nn.Conv2d:
    return nn.Conv2d(c_in, c_out, 3, padding=1)


def conv1x1(c_in: int, c_out: int) -> nn.Conv2d:
    return nn.Conv2d(c_in, c_out, 1)


class SelfAttention(nn.Module):
    """Single-head spatial self-attention with a residual connection."""

    def __init__(self, width: int):
        super().__init__()
        self.query = conv1x1(width, width)
        self.key = conv1x1(width, width)
        self.value = conv1x1(width, width)
        self.proj = conv1x1(width, width)

    def forward(self, x):
        b, c, h, w = x.shape
        q = self.query(x).flatten(2).transpose(1, 2)  # (B, HW, C)
        k = self.key(x).flatten(2)  # (B, C, HW)
        v = self.value(x).flatten(2).transpose(1, 2)
        attn = torch.softmax(torch.bmm(q, k) / c**0.5, dim=-1)
        out = torch.bmm(attn, v).transpose(1, 2).reshape(b, c, h, w)
        return x + self.proj(out)


class ResDSWTBlock(nn.Module):
    """``x + Conv3x3(LReLU(spatial(x)))``.

    ``spatial`` is Conv1x1 after WTConv for the ``dswt`` variant; the
    ablation variants swap in a plain 3x3 conv, optionally followed by
    self-attention.
    """

    def __init__(self, width: int, config: ModelConfig):
        super().__init__()
        if config.block == "dswt":
            self.spatial = nn.Sequential(
                WTConv(width, config.kernel_size, config.wt_levels, config.per_subband_scale),
                conv1x1(width, width))
        elif config.block == "conv":
            self.spatial = conv3x3(width, width)
        else:
            self.spatial = nn.Sequential(conv3x3(width, width), SelfAttention(width))
        self.act = nn.LeakyReLU(config.negative_slope)
        self.out = conv3x3(width, width)

    def forward(self, x):
        return x + self.out(self.act(self.spatial(x)))


class LowFrequencyBranch(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        c, w, slope = config.channels, config.low_width, config.negative_slope
        self.expand = nn.Sequential(
            conv3x3(c, w), nn.InstanceNorm2d(w, affine=True), nn.LeakyReLU(slope),
            conv3x3(w, w), nn.LeakyReLU(slope))
        self.blocks = nn.Sequential(*[ResDSWTBlock(w, config) for _ in range(config.n1)])
        self.reduce = nn.Sequential(conv3x3(w, w), nn.LeakyReLU(slope), conv3x3(w, c))

    def forward(self, low):
        return F.relu(low + self.reduce(self.blocks(self.expand(low))))


class MaskBranch(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        c, w = config.channels, config.mask_width
        self.expand = conv3x3(3 * c, w)
        self.blocks = nn.Sequential(*[ResDSWTBlock(w, config) for _ in range(config.n2)])
        self.reduce = conv3x3(w, c)

    def forward(self, low_hat, low, residual_top):
        size = residual_top.shape[-2:]
        feats = torch.cat([_bilinear(low_hat, size), _bilinear(low, size), residual_top], dim=1)
        return self.reduce(self.blocks(self.expand(feats)))


class FineTune(nn.Module):
    """``z + Conv1x1(LReLU(Conv1x1(z)))`` applied to a gated residual."""

    def __init__(self, channels: int, negative_slope: float):
        super().__init__()
        self.conv1 = conv1x1(channels, channels)
        self.act = nn.LeakyReLU(negative_slope)
        self.conv2 = conv1x1(channels, channels)

    def forward(self, z):
        return z + self.conv2(self.act(self.conv1(z)))


class MaskAdjust(nn.Module):
    """Carries a mask one pyramid level up: ``Conv3x3(LReLU(up2(m)))``."""

    def __init__(self, channels: int, negative_slope: float):
        super().__init__()
        self.act = nn.LeakyReLU(negative_slope)
        self.conv = conv3x3(channels, channels)

    def forward(self, mask, size):
        return self.conv(self.act(_bilinear(mask, size)))


def _bilinear(x, size):
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


class LPWTNet(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        c, slope, levels = config.channels, config.negative_slope, config.pyramid_levels
        self.low_branch = LowFrequencyBranch(config)
        self.mask_branch = MaskBranch(config)
        # index l refines residual level l; mask_adjust[l] produces the mask of level l < L-1
        self.fine_tune = nn.ModuleList([FineTune(c, slope) for _ in range(levels)])
        self.mask_adjust = nn.ModuleList([MaskAdjust(c, slope) for _ in range(levels - 1)])
        if config.zero_init_residual:
            self.zero_init_residual()

    def zero_init_residual(self):
        """Zero the last conv of every residual path and of the mask path, so
        the untrained network is exactly the identity map on nonnegative input."""
        last = [self.low_branch.reduce[-1], self.mask_branch.reduce]
        last += [b.out for b in self.low_branch.blocks] + [b.out for b in self.mask_branch.blocks]
        last += [f.conv2 for f in self.fine_tune] + [m.conv for m in self.mask_adjust]
        for conv in last:
            nn.init.zeros_(conv.weight)
            nn.init.zeros_(conv.bias)

    def decompose(self, x) -> PyramidDecomposition:
        return lp_decompose(x, self.config.pyramid_levels)

    def propagate_masks(self, top_mask, sizes) -> list:
        """Masks for every residual level, index ``l`` matching ``sizes[l]``."""
        levels = len(sizes)
        masks = [None] * levels
        masks[-1] = top_mask
        for l in range(levels - 2, -1, -1):
            masks[l] = self.mask_adjust[l](masks[l + 1], sizes[l])
        return masks

    def refine(self, level: int, residual, mask):
        if residual.shape != mask.shape:
            raise ValueError(f"mask {tuple(mask.shape)} does not match residual {tuple(residual.shape)}")
        return self.fine_tune[level](residual * mask + residual)

    def forward(self, x):
        self.config.check_input(x.shape)
        pyr = self.decompose(x)
        low_hat = self.low_branch(pyr.low)
        top = pyr.residuals[-1]
        top_mask = self.mask_branch(low_hat, pyr.low, top)
        masks = self.propagate_masks(top_mask, [r.shape[-2:] for r in pyr.residuals])
        refined = [self.refine(l, r, m) for l, (r, m) in enumerate(zip(pyr.residuals, masks))]
        return lp_reconstruct(PyramidDecomposition(refined, low_hat))


def build_model(config: ModelConfig = ModelConfig(), seed: int | None = None) -> LPWTNet:
    if seed is not None:
        torch.manual_seed(seed)
    return LPWTNet(config)
