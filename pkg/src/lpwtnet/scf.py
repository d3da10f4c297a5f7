"""Statistical channel fingerprint (sCF) tensors: grid discretization,
assembly, min-max normalization and on-disk datasets.

Dataset layout (a directory)::

    manifest.json   UTF-8 JSON, see ``DatasetManifest``
    samples.bin     M records of little-endian float32, row-major [sigma, sigma, N]
"""
from __future__ import annotations

import json
import os
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import channel

FORMAT_VERSION = 1
SAMPLE_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class GridSpec:
    area_size: float = 32.0
    resolution: int = 32

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if not self.area_size > 0:
            raise ValueError("area_size must be > 0")

    @property
    def cell_size(self) -> float:
        return self.area_size / self.resolution

    def centre(self, i: int, j: int) -> tuple[float, float]:
        """Centre of the 0-based cell (i, j)."""
        return ((i + 0.5) * self.cell_size, (j + 0.5) * self.cell_size)


@dataclass
class SCFTensor:
    data: np.ndarray  # (sigma, sigma, N)
    normalization: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"sCF must be 3-D (sigma, sigma, N), got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sCF contains non-finite entries")

    @property
    def shape(self):
        return self.data.shape


def assign_cell(grid: GridSpec, location: Sequence[float]) -> tuple[int, int]:
    """0-based index of the cell whose centre is nearest to ``location``.

    Ties go to the lowest ``i``, then the lowest ``j``.
    """
    x, y = float(location[0]), float(location[1])
    if not (0 <= x <= grid.area_size and 0 <= y <= grid.area_size):
        raise ValueError(f"location {(x, y)} outside the [0, {grid.area_size}]^2 area")

    def nearest(coord: float) -> int:
        # a point on a cell boundary is equidistant from both centres; ceil-1 picks the lower
        k = int(np.ceil(coord / grid.cell_size)) - 1
        return min(max(k, 0), grid.resolution - 1)

    # squared distance is separable, so the nearest centre is nearest per axis
    return nearest(x), nearest(y)


def build_scf(grid: GridSpec, cpas_field) -> SCFTensor:
    """Stack per-cell CPAS vectors into a (sigma, sigma, N) tensor.

    ``cpas_field`` is either an array of shape (sigma, sigma, N) or a mapping
    ``(i, j) -> vector`` covering every cell.
    """
    sigma = grid.resolution
    if isinstance(cpas_field, dict):
        missing = [(i, j) for i in range(sigma) for j in range(sigma) if (i, j) not in cpas_field]
        if missing:
            raise ValueError(f"{len(missing)} cells missing from the CPAS field, e.g. {missing[0]}")
        data = np.stack([np.stack([np.asarray(cpas_field[i, j], dtype=np.float64)
                                   for j in range(sigma)]) for i in range(sigma)])
    else:
        data = np.asarray(cpas_field, dtype=np.float64)
        if data.ndim == 1 and sigma == 1:
            data = data.reshape(1, 1, -1)
        if data.ndim != 3 or data.shape[:2] != (sigma, sigma):
            raise ValueError(f"CPAS field of shape {data.shape} does not cover a {sigma}x{sigma} grid")
    return SCFTensor(data)


def normalize(tensor: SCFTensor, stats: tuple[float, float]) -> SCFTensor:
    lo, hi = map(float, stats)
    if not hi > lo:
        raise ValueError(f"degenerate normalization stats min={lo}, max={hi}")
    return SCFTensor((tensor.data - lo) / (hi - lo), normalization=(lo, hi))


def denormalize(tensor: SCFTensor, stats: Optional[tuple[float, float]] = None) -> SCFTensor:
    stats = stats if stats is not None else tensor.normalization
    if stats is None:
        raise ValueError("tensor carries no normalization stats")
    lo, hi = map(float, stats)
    if not hi > lo:
        raise ValueError(f"degenerate normalization stats min={lo}, max={hi}")
    return SCFTensor(tensor.data * (hi - lo) + lo, normalization=None)


# --- datasets ------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    grid: GridSpec = GridSpec()
    array: channel.ArrayGeometry = channel.ArrayGeometry()
    clusters: channel.ClusterConfig = channel.ClusterConfig()
    slots: Optional[int] = 64  # None -> exact CPAS, no slot sampling

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(grid=GridSpec(**d["grid"]), array=channel.ArrayGeometry(**d["array"]),
                   clusters=channel.ClusterConfig(**d["clusters"]), slots=d.get("slots"))


@dataclass
class DatasetManifest:
    sigma: int
    n_channels: int
    sample_count: int
    norm_min: float
    norm_max: float
    generator: dict
    seed: int
    split_ratio: tuple = (4, 1)
    train_indices: list = field(default_factory=list)
    test_indices: list = field(default_factory=list)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("dataset needs at least one sample")
        if not self.norm_max > self.norm_min:
            raise ValueError("normalization min must be < max")

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return (self.sigma, self.sigma, self.n_channels)

    def to_json(self) -> str:
        d = asdict(self)
        d["split_ratio"] = list(self.split_ratio)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        d["split_ratio"] = tuple(d["split_ratio"])
        return cls(**d)


def split_indices(count: int, ratio: tuple = (4, 1)) -> tuple[list, list]:
    """Contiguous train/test split; the test share is rounded to nearest."""
    n_test = int(round(count * ratio[1] / (ratio[0] + ratio[1])))
    n_train = count - n_test
    return list(range(n_train)), list(range(n_train, count))


def generate_samples(config: GeneratorConfig, count: int, seed: int) -> np.ndarray:
    """Raw (unnormalized) ground-truth sCFs, shape (count, sigma, sigma, N).

    Each sample re-seeds the PAS field (and so the base-station position)
    from ``SeedSequence([seed, index])``.
    """
    basis = channel.steering_basis(config.array, mode=channel.DFT_KRONECKER)
    out = np.empty((count,) + (config.grid.resolution,) * 2 + (config.array.n_antennas,))
    for m in range(count):
        field_seq, meas_seq = np.random.SeedSequence([seed, m]).spawn(2)
        pas = channel.synth_pas_field(config.grid, config.array, config.clusters, field_seq)
        cpas = channel.measure_cpas_field(basis, pas, config.slots, meas_seq)
        out[m] = build_scf(config.grid, cpas).data
    return out


def write_dataset(path, samples: np.ndarray, manifest: DatasetManifest) -> Path:
    """Write atomically: files land in ``<path>.partial`` and are renamed when complete."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    samples = np.ascontiguousarray(samples, dtype=SAMPLE_DTYPE)
    if samples.shape[1:] != manifest.sample_shape or samples.shape[0] != manifest.sample_count:
        raise ValueError(f"samples {samples.shape} disagree with manifest {manifest.sample_shape}")
    (tmp / "samples.bin").write_bytes(samples.tobytes(order="C"))
    (tmp / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)
    return path


def generate_dataset(path, config: GeneratorConfig = GeneratorConfig(), count: int = 10,
                     seed: int = 0, split_ratio: tuple = (4, 1)) -> "Dataset":
    raw = generate_samples(config, count, seed).astype(SAMPLE_DTYPE)
    train, test = split_indices(count, split_ratio)
    lo, hi = float(raw.min()), float(raw.max())
    if not hi > lo:
        raise ValueError("generated samples are constant; cannot min-max normalize")
    manifest = DatasetManifest(
        sigma=config.grid.resolution, n_channels=config.array.n_antennas, sample_count=count,
        norm_min=lo, norm_max=hi, generator=config.to_dict(), seed=seed,
        split_ratio=tuple(split_ratio), train_indices=train, test_indices=test)
    write_dataset(path, raw, manifest)
    return Dataset(path)


class Dataset:
    """Read-only view of a dataset directory (memory-mapped samples)."""

    def __init__(self, path):
        self.path = Path(path)
        self.manifest = DatasetManifest.from_json((self.path / "manifest.json").read_text(encoding="utf-8"))
        m = self.manifest
        self._raw = np.memmap(self.path / "samples.bin", dtype=SAMPLE_DTYPE, mode="r",
                              shape=(m.sample_count,) + m.sample_shape)

    def __len__(self):
        return self.manifest.sample_count

    @property
    def stats(self) -> tuple[float, float]:
        return (self.manifest.norm_min, self.manifest.norm_max)

    def raw(self, index: int) -> np.ndarray:
        return np.array(self._raw[index])

    def normalized(self, indices) -> np.ndarray:
        """Normalized float32 samples, shape (len(indices), sigma, sigma, N)."""
        lo, hi = self.stats
        x = np.asarray(self._raw[np.asarray(indices)], dtype=np.float64)
        return ((x - lo) / (hi - lo)).astype(np.float32)

    def __getitem__(self, index: int) -> SCFTensor:
        return normalize(SCFTensor(self.raw(index).astype(np.float64)), self.stats)
