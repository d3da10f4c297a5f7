"""Statistical massive-MIMO channel model on a uniform planar array.

Steering vectors, the angular basis ``A``, synthetic power angular spectra
(PAS) over a spatial grid, channel spatial covariance matrices (CSCM) and the
beam-domain extraction of the channel power angular spectrum (CPAS).

Covariance algebra is done in complex128.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

STEERING_LITERAL = "steering-literal"
DFT_KRONECKER = "dft-kronecker"
BASIS_MODES = (STEERING_LITERAL, DFT_KRONECKER)


@dataclass(frozen=True)
class ArrayGeometry:
    n_y: int = 8
    n_z: int = 8
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise ValueError(f"antenna counts must be positive, got {self.n_y}x{self.n_z}")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be > 0")

    @property
    def n_antennas(self) -> int:
        return self.n_y * self.n_z


@dataclass(frozen=True)
class AngleGrid:
    """Discretized (elevation, azimuth) pairs, one per angular index ``n``."""

    entries: np.ndarray  # (N, 2) radians: [:, 0] elevation, [:, 1] azimuth
    bounds: tuple = (-np.pi / 2, np.pi / 2, -np.pi / 2, np.pi / 2)

    def __len__(self):
        return len(self.entries)

    @property
    def elevation(self) -> np.ndarray:
        return self.entries[:, 0]

    @property
    def azimuth(self) -> np.ndarray:
        return self.entries[:, 1]


@dataclass(frozen=True)
class SteeringBasis:
    matrix: np.ndarray  # (N, N) complex, column n = response of angular bin n
    mode: str

    @property
    def n_antennas(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PowerAngularSpectrum:
    large_scale_gain: float
    powers: np.ndarray

    def __post_init__(self):
        powers = np.asarray(self.powers, dtype=np.float64)
        if powers.ndim != 1:
            raise ValueError("powers must be a vector")
        if not np.all(np.isfinite(powers)) or np.any(powers < 0):
            raise ValueError("powers must be finite and nonnegative")
        if not (np.isfinite(self.large_scale_gain) and self.large_scale_gain >= 0):
            raise ValueError("large_scale_gain must be finite and nonnegative")
        object.__setattr__(self, "powers", powers)

    @property
    def scaled(self) -> np.ndarray:
        """Per-bin channel power ``xi * S(n)``."""
        return self.large_scale_gain * self.powers


@dataclass(frozen=True)
class ChannelSamples:
    h: np.ndarray  # (T, N) antenna-domain channels, one row per slot
    g: Optional[np.ndarray] = None  # (T, N) angular-domain gains


def build_angle_grid(array: ArrayGeometry) -> AngleGrid:
    """Uniform-in-sine grid: ``sin(angle(n)) = 2n/N - 1`` for both angles."""
    n_ant = array.n_antennas
    sines = 2.0 * np.arange(n_ant) / n_ant - 1.0
    angles = np.arcsin(sines)
    return AngleGrid(np.stack([angles, angles], axis=1))


def _phase_ramp(count: int, spacing: float, direction_cosine: float) -> np.ndarray:
    return np.exp(-2j * np.pi * spacing * np.arange(count) * direction_cosine)


def steering_vector(array: ArrayGeometry, elevation: float, azimuth: float) -> np.ndarray:
    a_y = _phase_ramp(array.n_y, array.spacing_wavelengths, np.cos(elevation) * np.sin(azimuth))
    a_z = _phase_ramp(array.n_z, array.spacing_wavelengths, np.sin(elevation))
    return np.kron(a_z, a_y)


def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized DFT matrix, entries ``exp(-j 2 pi p q / n)``."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n)


def steering_basis(array: ArrayGeometry, grid: Optional[AngleGrid] = None,
                   mode: str = DFT_KRONECKER) -> SteeringBasis:
    if mode not in BASIS_MODES:
        raise ValueError(f"unknown basis mode {mode!r}; expected one of {BASIS_MODES}")
    n_ant = array.n_antennas
    if mode == DFT_KRONECKER:
        if grid is not None and len(grid) != n_ant:
            raise ValueError(f"grid has {len(grid)} entries, array has {n_ant} antennas")
        return SteeringBasis(np.kron(dft_matrix(array.n_z), dft_matrix(array.n_y)), mode)
    if grid is None:
        grid = build_angle_grid(array)
    if len(grid) != n_ant:
        raise ValueError(f"grid has {len(grid)} entries, array has {n_ant} antennas")
    cols = [steering_vector(array, el, az) for el, az in grid.entries]
    return SteeringBasis(np.stack(cols, axis=1), mode)


def single_index_dft_matrix(array: ArrayGeometry) -> np.ndarray:
    """Single-index UPA form where row ``m`` (1-based) uses ``m' = ceil(m/N_y)``
    and ``m'' = m mod N_y`` with one shared column index ``n``.

    Rows depend on ``m`` only through ``m' + m''``, so the matrix is rank
    deficient for ``N_y, N_z > 1``; it is kept for comparison with the
    Kronecker construction, not for covariance algebra.
    """
    n_ant = array.n_antennas
    m = np.arange(1, n_ant + 1)
    m1 = np.ceil(m / array.n_y)
    m2 = np.mod(m, array.n_y)
    n = np.arange(1, n_ant + 1)
    centred = n - 1 - n_ant / 2
    expo = np.outer((m1 - 1) + (m2 - 1), centred) / n_ant
    return np.exp(-2j * np.pi * expo)


def cscm_from_pas(basis: SteeringBasis, pas: PowerAngularSpectrum) -> np.ndarray:
    """Channel spatial covariance ``A diag(xi S) A^H``."""
    a = basis.matrix
    if pas.powers.shape != (a.shape[1],):
        raise ValueError(f"PAS length {pas.powers.shape[0]} does not match basis {a.shape}")
    omega = (a * pas.scaled) @ a.conj().T
    return 0.5 * (omega + omega.conj().T)


def sample_channels(basis: SteeringBasis, pas: PowerAngularSpectrum, slots: int,
                    seed=None) -> ChannelSamples:
    """Draw ``slots`` channels ``h_t = A g_t`` with independent CN(0, xi S(n)) gains.

    ``seed`` may be an int, ``SeedSequence`` or an existing ``Generator``.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    rng = np.random.default_rng(seed)
    n_bins = pas.powers.shape[0]
    eps = (rng.standard_normal((slots, n_bins)) + 1j * rng.standard_normal((slots, n_bins))) / np.sqrt(2)
    g = eps * np.sqrt(pas.scaled)
    h = g @ basis.matrix.T
    return ChannelSamples(h=h, g=g)


def sample_covariance(samples) -> np.ndarray:
    """``(1/T) sum_t h_t h_t^H`` from a ``ChannelSamples`` or a (T, N) array."""
    h = samples.h if isinstance(samples, ChannelSamples) else np.asarray(samples)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError("need a non-empty (T, N) sample array")
    omega = h.T @ h.conj() / h.shape[0]
    return 0.5 * (omega + omega.conj().T)


def extract_cpas(basis: SteeringBasis, cov: np.ndarray) -> np.ndarray:
    """Beam-diagonal CPAS estimate ``a_n^H Omega a_n / N^2``.

    Only valid on the orthogonal (Kronecker DFT) basis, where it inverts
    :func:`cscm_from_pas` exactly.
    """
    if basis.mode != DFT_KRONECKER:
        raise ValueError("CPAS extraction requires the orthogonal dft-kronecker basis")
    a = basis.matrix
    n_ant = a.shape[0]
    if cov.shape != (n_ant, n_ant):
        raise ValueError(f"covariance shape {cov.shape} does not match basis")
    quad = np.einsum("in,in->n", a.conj(), cov @ a).real
    return np.maximum(quad, 0.0) / n_ant**2


def is_valid_covariance(cov: np.ndarray) -> bool:
    """Hermitian within 1e-10 after unit-trace normalization and PSD to -1e-8 * trace."""
    tr = np.trace(cov).real
    if tr <= 0:
        return bool(np.allclose(cov, 0))
    unit = cov / tr
    if np.max(np.abs(unit - unit.conj().T)) > 1e-10:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (cov + cov.conj().T)).min() >= -1e-8 * tr)


# --- synthetic PAS field -----------------------------------------------------

@dataclass(frozen=True)
class ClusterConfig:
    """Parameters of the cluster-based synthetic PAS generator.

    Angular quantities are in DFT-bin units; distances in meters.
    """

    num_clusters: int = 4
    angular_spread: float = 2.0
    power_decay: float = 0.5
    spatial_correlation_length: float = 6.0
    cluster_drift: float = 1.5
    bs_height: float = 25.0
    ut_height: float = 1.5
    pathloss_exponent: float = 2.5
    shadowing_db: float = 3.0

    def __post_init__(self):
        if self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        if not self.angular_spread > 0:
            raise ValueError("angular_spread must be > 0")
        if not 0 < self.power_decay <= 1:
            raise ValueError("power_decay must lie in (0, 1]")
        if not self.spatial_correlation_length > 0:
            raise ValueError("spatial_correlation_length must be > 0")
        if self.cluster_drift < 0 or self.shadowing_db < 0 or self.pathloss_exponent < 0:
            raise ValueError("cluster_drift, shadowing_db and pathloss_exponent must be >= 0")


@dataclass(frozen=True)
class PASField:
    """Per-cell PAS over a sigma x sigma grid."""

    gains: np.ndarray  # (sigma, sigma) large-scale gains xi
    powers: np.ndarray  # (sigma, sigma, N), each fiber sums to 1
    bs_position: tuple = field(default=(0.0, 0.0))

    def cell(self, i: int, j: int) -> PowerAngularSpectrum:
        return PowerAngularSpectrum(float(self.gains[i, j]), self.powers[i, j])

    @property
    def cpas(self) -> np.ndarray:
        """Exact ``xi * S`` fibers, shape (sigma, sigma, N)."""
        return self.gains[..., None] * self.powers


def _smooth_field(rng: np.random.Generator, sigma: int, corr_cells: float) -> np.ndarray:
    """Zero-mean, unit-std spatially correlated Gaussian field."""
    noise = rng.standard_normal((sigma, sigma))
    smooth = ndimage.gaussian_filter(noise, sigma=corr_cells, mode="reflect")
    std = smooth.std()
    return smooth / std if std > 0 else smooth


def _circular_offset(coord: np.ndarray, centre: np.ndarray, period: int) -> np.ndarray:
    d = np.mod(coord - centre + period / 2, period) - period / 2
    return d


def synth_pas_field(grid, array: ArrayGeometry, config: ClusterConfig = ClusterConfig(),
                    seed=None) -> PASField:
    """Cluster-based PAS with spatially smooth cluster drift and shadowing.

    The first cluster tracks the geometric direction from a randomly placed
    base station to each cell centre; the others sit at random angular
    offsets that drift across the area through correlated random fields.
    Each cluster is Laplacian-shaped around its (circular) bin centre.
    """
    rng = np.random.default_rng(seed)
    sigma = grid.resolution
    cell = grid.cell_size
    corr_cells = config.spatial_correlation_length / cell
    n_y, n_z, ups = array.n_y, array.n_z, array.spacing_wavelengths

    bs = rng.uniform(0.0, grid.area_size, size=2)
    centres = (np.arange(sigma) + 0.5) * cell
    cx, cy = np.meshgrid(centres, centres, indexing="ij")
    dx, dy = cx - bs[0], cy - bs[1]
    horiz = np.hypot(dx, dy)
    dh = config.bs_height - config.ut_height
    dist3 = np.sqrt(horiz**2 + dh**2)
    sin_el = -dh / dist3
    cos_el = horiz / dist3
    sin_az = np.divide(dy, horiz, out=np.zeros_like(dy), where=horiz > 0)

    # continuous DFT-bin coordinates of the line-of-sight direction
    los_p = n_z * ups * sin_el
    los_q = n_y * ups * cos_el * sin_az

    centres_p = [los_p]
    centres_q = [los_q]
    for _ in range(config.num_clusters - 1):
        off_p, off_q = rng.uniform(0, n_z), rng.uniform(0, n_y)
        centres_p.append(los_p + off_p + config.cluster_drift * _smooth_field(rng, sigma, corr_cells))
        centres_q.append(los_q + off_q + config.cluster_drift * _smooth_field(rng, sigma, corr_cells))

    base_power = config.power_decay ** np.arange(config.num_clusters)
    p_idx = np.arange(n_z)[:, None]
    q_idx = np.arange(n_y)[None, :]
    powers = np.zeros((sigma, sigma, n_z, n_y))
    for c in range(config.num_clusters):
        fluct = np.exp(0.3 * _smooth_field(rng, sigma, corr_cells)) if c else 1.0
        dp = _circular_offset(p_idx[None, None], centres_p[c][..., None, None], n_z)
        dq = _circular_offset(q_idx[None, None], centres_q[c][..., None, None], n_y)
        dist = np.sqrt(dp**2 + dq**2)
        weight = base_power[c] * fluct
        powers += np.asarray(weight)[..., None, None] * np.exp(-np.sqrt(2) * dist / config.angular_spread)
    powers = powers.reshape(sigma, sigma, n_z * n_y)
    powers /= powers.sum(axis=-1, keepdims=True)

    shadow_db = config.shadowing_db * _smooth_field(rng, sigma, corr_cells)
    gains = (dist3 / dh) ** (-config.pathloss_exponent) * 10 ** (shadow_db / 10)
    return PASField(gains=gains, powers=powers, bs_position=(float(bs[0]), float(bs[1])))


def measure_cpas_field(basis: SteeringBasis, pas_field: PASField, slots: Optional[int] = None,
                       seed=None) -> np.ndarray:
    """CPAS per grid cell, (sigma, sigma, N).

    With ``slots=None`` the exact ``xi * S`` is returned. Otherwise every cell
    is measured: ``slots`` channels are drawn, the sample covariance formed
    and the CPAS extracted from it.
    """
    if slots is None:
        return pas_field.cpas
    rng = np.random.default_rng(seed)
    sigma = pas_field.gains.shape[0]
    out = np.empty(pas_field.powers.shape)
    for i in range(sigma):
        for j in range(sigma):
            samples = sample_channels(basis, pas_field.cell(i, j), slots, rng)
            out[i, j] = extract_cpas(basis, sample_covariance(samples))
    return out
