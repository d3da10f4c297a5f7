"""Haar wavelet transform as a strided depthwise convolution, and WTConv.

Tensors are (B, C, H, W). Subbands of channel ``c`` are stored interleaved at
channels ``4c .. 4c+3`` in LL, LH, HL, HH order; convolutions are
cross-correlations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

SUBBANDS = ("ll", "lh", "hl", "hh")


@dataclass(frozen=True)
class FilterBank:
    """Four 2x2 analysis filters, LL first. Must be orthonormal."""

    filters: tuple

    def tensor(self, dtype=torch.float32, device=None) -> torch.Tensor:
        return torch.tensor(self.filters, dtype=dtype, device=device)

    def is_orthonormal(self, atol: float = 1e-12) -> bool:
        f = self.tensor(torch.float64).reshape(4, 4)
        return bool(torch.allclose(f @ f.T, torch.eye(4, dtype=torch.float64), atol=atol))


HAAR = FilterBank((
    ((0.5, 0.5), (0.5, 0.5)),
    ((0.5, -0.5), (0.5, -0.5)),
    ((0.5, 0.5), (-0.5, -0.5)),
    ((0.5, -0.5), (-0.5, 0.5)),
))


@dataclass
class WaveletComponents:
    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor
    level: int = 1

    def stacked(self) -> torch.Tensor:
        b, c, h, w = self.ll.shape
        return torch.stack([self.ll, self.lh, self.hl, self.hh], dim=2).reshape(b, 4 * c, h, w)

    @classmethod
    def from_stacked(cls, y: torch.Tensor, level: int = 1) -> "WaveletComponents":
        b, c4, h, w = y.shape
        y = y.reshape(b, c4 // 4, 4, h, w)
        return cls(y[:, :, 0], y[:, :, 1], y[:, :, 2], y[:, :, 3], level)


def _bank_weight(channels: int, bank: FilterBank, x: torch.Tensor) -> torch.Tensor:
    f = bank.tensor(x.dtype, x.device).unsqueeze(1)  # (4, 1, 2, 2)
    return f.repeat(channels, 1, 1, 1)


def wt_stacked(x: torch.Tensor, bank: FilterBank = HAAR) -> torch.Tensor:
    """One analysis level: (B, C, H, W) -> (B, 4C, H/2, W/2)."""
    c = x.shape[1]
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"wavelet transform needs even spatial size, got {h}x{w}")
    return F.conv2d(x, _bank_weight(c, bank, x), stride=2, groups=c)


def iwt_stacked(y: torch.Tensor, bank: FilterBank = HAAR) -> torch.Tensor:
    """Synthesis via transposed convolution: (B, 4C, h, w) -> (B, C, 2h, 2w)."""
    if y.shape[1] % 4:
        raise ValueError(f"expected 4C subband channels, got {y.shape[1]}")
    c = y.shape[1] // 4
    return F.conv_transpose2d(y, _bank_weight(c, bank, y), stride=2, groups=c)


def wt(x: torch.Tensor, bank: FilterBank = HAAR) -> WaveletComponents:
    return WaveletComponents.from_stacked(wt_stacked(x, bank))


def iwt(components: WaveletComponents, bank: FilterBank = HAAR) -> torch.Tensor:
    shapes = {tuple(getattr(components, s).shape) for s in SUBBANDS}
    if len(shapes) != 1:
        raise ValueError(f"subband shapes disagree: {sorted(shapes)}")
    return iwt_stacked(components.stacked(), bank)


def wt_cascade(x: torch.Tensor, levels: int, bank: FilterBank = HAAR) -> list[WaveletComponents]:
    """Recursive decomposition of the LL band; entry ``i-1`` holds level ``i``."""
    h, w = x.shape[-2:]
    if h % 2**levels or w % 2**levels:
        raise ValueError(f"spatial size {h}x{w} is not divisible by 2^{levels}")
    out = []
    ll = x
    for i in range(1, levels + 1):
        comp = WaveletComponents.from_stacked(wt_stacked(ll, bank), level=i)
        out.append(comp)
        ll = comp.ll
    return out


def _scale_subbands(z: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    if scale.numel() == 1:
        return z * scale
    b, c4, h, w = z.shape
    return (z.reshape(b, c4 // 4, 4, h, w) * scale.reshape(1, 1, 4, 1, 1)).reshape(b, c4, h, w)


def wtconv_forward(x: torch.Tensor, base_weight: torch.Tensor, level_weights: Sequence[torch.Tensor],
                   base_scale: torch.Tensor, level_scales: Sequence[torch.Tensor],
                   bank: FilterBank = HAAR) -> torch.Tensor:
    """Depthwise k x k convolution carried out on ``len(level_weights)``
    cascaded wavelet levels plus the full-resolution input.

    ``base_weight`` is (C, 1, k, k); ``level_weights[i-1]`` is (4C, 1, k, k)
    and acts on all four subbands of level ``i``; ``level_scales[i-1]`` is a
    scalar or a 4-vector (one per subband). Output shape equals input shape.
    """
    c = x.shape[1]
    levels = len(level_weights)
    if len(level_scales) != levels:
        raise ValueError("need one scale per wavelet level")
    h, w = x.shape[-2:]
    if h % 2**levels or w % 2**levels:
        raise ValueError(f"spatial size {h}x{w} is not divisible by 2^{levels}")
    k = base_weight.shape[-1]
    pad = (k - 1) // 2

    ll = x
    scaled = []
    for weight, scale in zip(level_weights, level_scales):
        y = wt_stacked(ll, bank)
        ll = y[:, 0::4]
        z = F.conv2d(y, weight, padding=pad, groups=4 * c)
        scaled.append(_scale_subbands(z, scale))

    carry = None
    for z in reversed(scaled):
        if carry is not None:
            b, c4, hh, ww = z.shape
            z = z.reshape(b, c, 4, hh, ww)
            z = torch.cat([(z[:, :, 0] + carry).unsqueeze(2), z[:, :, 1:]], dim=2).reshape(b, c4, hh, ww)
        carry = iwt_stacked(z, bank)

    out = F.conv2d(x, base_weight, padding=pad, groups=c) * base_scale
    return out if carry is None else out + carry


class WTConv(nn.Module):
    """Learnable WTConv layer (depthwise, no bias).

    ``levels`` is the number of wavelet decompositions; each adds 4C k^2
    kernel weights and one scale (four with ``per_subband_scale``), and
    doubles the receptive field, which is ``2^levels * k``.
    """

    def __init__(self, channels: int, kernel_size: int = 3, levels: int = 2,
                 per_subband_scale: bool = False, init_noise: float = 1e-2,
                 bank: FilterBank = HAAR):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if levels < 0:
            raise ValueError("levels must be >= 0")
        self.channels = channels
        self.kernel_size = kernel_size
        self.levels = levels
        self.bank = bank
        self.base_weight = nn.Parameter(torch.empty(channels, 1, kernel_size, kernel_size))
        self.level_weights = nn.ParameterList(
            [nn.Parameter(torch.empty(4 * channels, 1, kernel_size, kernel_size)) for _ in range(levels)])
        self.base_scale = nn.Parameter(torch.ones(1))
        scale_shape = (4,) if per_subband_scale else (1,)
        self.level_scales = nn.ParameterList([nn.Parameter(torch.ones(scale_shape)) for _ in range(levels)])
        self.init_noise = init_noise
        self.reset_parameters()

    def reset_parameters(self):
        centre = self.kernel_size // 2
        for weight in [self.base_weight, *self.level_weights]:
            with torch.no_grad():
                weight.normal_(0.0, self.init_noise)
                weight[:, :, centre, centre] += 1.0
        for scale in [self.base_scale, *self.level_scales]:
            nn.init.ones_(scale)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return wtconv_forward(x, self.base_weight, list(self.level_weights), self.base_scale,
                              list(self.level_scales), self.bank)

    def extra_repr(self) -> str:
        return f"{self.channels}, kernel_size={self.kernel_size}, levels={self.levels}"

