"""Closed-form Laplacian pyramid on (B, C, H, W) tensors.

Fixed 5x5 binomial kernel, reflect boundaries, even-index decimation and a
zero-insertion expand with gain 4. No trainable parameters.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

BINOMIAL_TAPS = (1.0, 4.0, 6.0, 4.0, 1.0)


def gaussian_kernel(dtype=torch.float64, device=None) -> torch.Tensor:
    """The 5x5 kernel ``p^T p / 256``; entries sum to exactly 1."""
    p = torch.tensor(BINOMIAL_TAPS, dtype=dtype, device=device)
    return torch.outer(p, p) / 256.0


def reflect_index(n: int, pad: int, device=None) -> torch.Tensor:
    """Indices of a length-``n`` axis padded by ``pad`` on both sides with
    mirror reflection (edge sample not repeated), valid for any ``pad``."""
    idx = torch.arange(-pad, n + pad, device=device)
    if n == 1:
        return torch.zeros_like(idx)
    period = 2 * (n - 1)
    r = torch.remainder(idx, period)
    return torch.where(r >= n, period - r, r)


def reflect_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
    h, w = x.shape[-2:]
    x = x.index_select(-2, reflect_index(h, pad, x.device))
    return x.index_select(-1, reflect_index(w, pad, x.device))


def _depthwise(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    weight = kernel.to(x.dtype).expand(c, 1, *kernel.shape)
    pad = kernel.shape[-1] // 2
    return F.conv2d(reflect_pad(x, pad), weight, groups=c)


def gaussian_smooth(x: torch.Tensor) -> torch.Tensor:
    return _depthwise(x, gaussian_kernel(x.dtype, x.device))


def downsample(x: torch.Tensor) -> torch.Tensor:
    return x[..., ::2, ::2]


def upsample_smooth(x: torch.Tensor) -> torch.Tensor:
    """Zero-insertion to 2H x 2W followed by smoothing with ``4 * G``."""
    b, c, h, w = x.shape
    up = x.new_zeros(b, c, 2 * h, 2 * w)
    up[..., ::2, ::2] = x
    return _depthwise(up, 4.0 * gaussian_kernel(x.dtype, x.device))


@dataclass
class PyramidDecomposition:
    residuals: list  # residuals[l] has spatial size (H / 2^l, W / 2^l)
    low: torch.Tensor

    @property
    def levels(self) -> int:
        return len(self.residuals)


def lp_decompose(x: torch.Tensor, levels: int) -> PyramidDecomposition:
    if levels < 0:
        raise ValueError("levels must be >= 0")
    h, w = x.shape[-2:]
    step = 2**levels
    if h % step or w % step:
        raise ValueError(f"spatial size {h}x{w} is not divisible by 2^{levels}")
    residuals = []
    current = x
    for _ in range(levels):
        nxt = downsample(gaussian_smooth(current))
        residuals.append(current - upsample_smooth(nxt))
        current = nxt
    return PyramidDecomposition(residuals, current)


def lp_reconstruct(decomp: PyramidDecomposition) -> torch.Tensor:
    out = decomp.low
    for res in reversed(decomp.residuals):
        out = upsample_smooth(out)
        if out.shape != res.shape:
            raise ValueError(f"residual shape {tuple(res.shape)} does not match {tuple(out.shape)}")
        out = out + res
    return out
