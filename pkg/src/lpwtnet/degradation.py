"""Masking operators for the three measurement-constrained scenarios.

``task`` is the degradation factor: -1 non-uniform (Bernoulli) sparse
sampling, 0 a rectangular inaccessible region, +1 uniform stride sampling.
All masks have shape (sigma, sigma, N) and take values in {0, 1}.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

NONUNIFORM, REGION, UNIFORM = -1, 0, 1
TASK_NAMES = {NONUNIFORM: "nonuniform", REGION: "region", UNIFORM: "uniform"}
TASKS_BY_NAME = {v: k for k, v in TASK_NAMES.items()}


@dataclass(frozen=True)
class DegradationSpec:
    task: int
    p_m: float = 0.2
    region: Optional[tuple] = None  # (x_L, x_R, y_B, y_T), inclusive 0-based cell indices
    region_size: int = 4  # cells per side when the region is placed at random
    stride: int = 2
    channel_shared: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASK_NAMES:
            raise ValueError(f"task must be one of {sorted(TASK_NAMES)}, got {self.task}")
        if self.task == NONUNIFORM and not 0 <= self.p_m < 1:
            raise ValueError("p_m must lie in [0, 1)")
        if self.task == REGION:
            if self.region is not None:
                x_l, x_r, y_b, y_t = self.region
                if x_l > x_r or y_b > y_t:
                    raise ValueError(f"malformed region {self.region}")
            elif self.region_size < 1:
                raise ValueError("region_size must be >= 1")
        if self.task == UNIFORM and self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def name(self) -> str:
        return TASK_NAMES[self.task]

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["region"] is not None:
            d["region"] = list(d["region"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        d = dict(d)
        if d.get("region") is not None:
            d["region"] = tuple(d["region"])
        return cls(**d)

    def for_sample(self, index: int) -> "DegradationSpec":
        """Spec whose seed is derived from (seed, task, sample index)."""
        return replace(self, seed=sample_seed(self.seed, self.task, index))


def sample_seed(seed: int, task: int, index: int) -> int:
    """Deterministic per-sample seed: ``seed XOR crc32(task, index)``."""
    return (int(seed) ^ zlib.crc32(f"{task}:{index}".encode())) & 0xFFFFFFFF


def make_mask(spec: DegradationSpec, shape: tuple) -> np.ndarray:
    sigma_x, sigma_y, n_ch = shape
    if spec.task == NONUNIFORM:
        rng = np.random.default_rng(spec.seed)
        if spec.channel_shared:
            keep = rng.random((sigma_x, sigma_y, 1)) >= spec.p_m
            return np.broadcast_to(keep, shape).astype(np.float32)
        return (rng.random(shape) >= spec.p_m).astype(np.float32)

    if spec.task == REGION:
        x_l, x_r, y_b, y_t = spec.region if spec.region is not None else random_region(spec, shape)
        if x_l < 0 or y_b < 0 or x_r >= sigma_x or y_t >= sigma_y:
            raise ValueError(f"region {(x_l, x_r, y_b, y_t)} outside a {sigma_x}x{sigma_y} grid")
        mask = np.ones(shape, dtype=np.float32)
        mask[x_l:x_r + 1, y_b:y_t + 1, :] = 0
        return mask

    s = spec.stride
    if s > min(sigma_x, sigma_y):
        raise ValueError(f"stride {s} exceeds grid size {min(sigma_x, sigma_y)}")
    mask = np.zeros(shape, dtype=np.float32)
    mask[::s, ::s, :] = 1
    return mask


def random_region(spec: DegradationSpec, shape: tuple) -> tuple:
    """Fixed-size square placed uniformly over all valid top-left corners."""
    size = spec.region_size
    if size > shape[0] or size > shape[1]:
        raise ValueError(f"region of {size} cells does not fit a {shape[0]}x{shape[1]} grid")
    rng = np.random.default_rng(spec.seed)
    x_l = int(rng.integers(0, shape[0] - size + 1))
    y_b = int(rng.integers(0, shape[1] - size + 1))
    return (x_l, x_l + size - 1, y_b, y_b + size - 1)


def degrade(tensor: np.ndarray, spec: Optional[DegradationSpec] = None,
            mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(mask * tensor, mask)``; pass either a spec or a ready mask."""
    tensor = np.asarray(tensor)
    if mask is None:
        if spec is None:
            raise ValueError("degrade needs a spec or a mask")
        mask = make_mask(spec, tensor.shape)
    if mask.shape != tensor.shape:
        raise ValueError(f"mask shape {mask.shape} does not match tensor {tensor.shape}")
    return (mask * tensor).astype(tensor.dtype, copy=False), mask


def parse_task(value) -> int:
    if isinstance(value, str):
        if value in TASKS_BY_NAME:
            return TASKS_BY_NAME[value]
        value = int(value)
    if value not in TASK_NAMES:
        raise ValueError(f"unknown task {value!r}")
    return int(value)
