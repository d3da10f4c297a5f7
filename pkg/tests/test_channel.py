import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpwtnet import channel
from lpwtnet.channel import (DFT_KRONECKER, STEERING_LITERAL, ArrayGeometry, ClusterConfig,
                             PowerAngularSpectrum)
from lpwtnet.scf import GridSpec

ARRAY = ArrayGeometry(8, 8)


def basis64():
    return channel.steering_basis(ARRAY, mode=DFT_KRONECKER)


def random_pas(rng, n=64, gain=1.0):
    return PowerAngularSpectrum(gain, rng.random(n))


# --- angle grid and steering vectors -------------------------------------------

def test_angle_grid_two_antennas():
    grid = channel.build_angle_grid(ArrayGeometry(1, 2))
    np.testing.assert_allclose(np.sin(grid.elevation), [-1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(np.sin(grid.azimuth), [-1.0, 0.0], atol=1e-15)


def test_angle_grid_midpoint_and_length():
    grid = channel.build_angle_grid(ArrayGeometry(2, 2))
    assert np.sin(grid.elevation[2]) == pytest.approx(0.0, abs=1e-15)
    assert len(channel.build_angle_grid(ARRAY)) == 64


def test_steering_vector_broadside_is_all_ones():
    np.testing.assert_allclose(channel.steering_vector(ARRAY, 0.0, 0.0), np.ones(64))


def test_steering_vector_z_ramp_at_endfire():
    a = channel.steering_vector(ArrayGeometry(1, 2), np.pi / 2, 0.0)
    np.testing.assert_allclose(a, [1.0, -1.0], atol=1e-12)


def test_steering_vector_matches_elementwise_formula():
    # oracle: antenna (z index mz, y index my) sits at position mz * N_y + my
    arr = ArrayGeometry(3, 4, 0.5)
    theta, phi = 0.3, -0.7
    a = channel.steering_vector(arr, theta, phi)
    for mz in range(arr.n_z):
        for my in range(arr.n_y):
            phase = -2 * np.pi * 0.5 * (mz * np.sin(theta) + my * np.cos(theta) * np.sin(phi))
            assert a[mz * arr.n_y + my] == pytest.approx(np.exp(1j * phase), abs=1e-12)


@given(st.floats(-np.pi / 2, np.pi / 2), st.floats(-np.pi, np.pi))
def test_steering_vector_unit_modulus(theta, phi):
    a = channel.steering_vector(ARRAY, theta, phi)
    assert np.max(np.abs(np.abs(a) - 1.0)) < 1e-12


# --- bases -------------------------------------------------------------------

def test_dft_basis_small_first_row_all_ones():
    a = channel.steering_basis(ArrayGeometry(2, 2), mode=DFT_KRONECKER).matrix
    np.testing.assert_allclose(a[0], np.ones(4))


@pytest.mark.parametrize("ny,nz", [(8, 8), (4, 2), (16, 16)])
def test_dft_basis_orthogonality(ny, nz):
    a = channel.steering_basis(ArrayGeometry(ny, nz), mode=DFT_KRONECKER).matrix
    n = ny * nz
    assert np.max(np.abs(a.conj().T @ a - n * np.eye(n))) < 1e-9 * n


def test_dft_basis_entries_match_kron_formula():
    arr = ArrayGeometry(4, 2)
    a = channel.steering_basis(arr, mode=DFT_KRONECKER).matrix
    for row in range(8):
        for col in range(8):
            pz, py = divmod(row, 4)
            qz, qy = divmod(col, 4)
            expected = np.exp(-2j * np.pi * pz * qz / 2) * np.exp(-2j * np.pi * py * qy / 4)
            assert a[row, col] == pytest.approx(expected, abs=1e-12)


def test_literal_basis_columns_are_steering_vectors():
    basis = channel.steering_basis(ArrayGeometry(2, 2), mode=STEERING_LITERAL)
    grid = channel.build_angle_grid(ArrayGeometry(2, 2))
    for n in range(4):
        np.testing.assert_allclose(basis.matrix[:, n],
                                   channel.steering_vector(ArrayGeometry(2, 2), *grid.entries[n]))
    assert np.max(np.abs(np.abs(basis.matrix) - 1)) < 1e-12


def test_basis_rejects_mismatched_grid():
    grid = channel.build_angle_grid(ArrayGeometry(2, 2))
    with pytest.raises(ValueError):
        channel.steering_basis(ARRAY, grid, mode=STEERING_LITERAL)


# --- covariance algebra ------------------------------------------------------

def test_cscm_single_path_is_rank_one():
    s = np.zeros(64)
    s[5] = 1.0
    omega = channel.cscm_from_pas(basis64(), PowerAngularSpectrum(2.0, s))
    a5 = basis64().matrix[:, 5]
    np.testing.assert_allclose(omega, 2.0 * np.outer(a5, a5.conj()), atol=1e-12)
    assert np.linalg.matrix_rank(omega, tol=1e-8) == 1


def test_cscm_trace_identity():
    s = np.zeros(64)
    s[[3, 40]] = 1.0  # sum 2
    omega = channel.cscm_from_pas(basis64(), PowerAngularSpectrum(1.0, s))
    assert np.trace(omega).real == pytest.approx(128.0, rel=1e-9)


def test_cscm_zero_and_negative_powers():
    assert np.all(channel.cscm_from_pas(basis64(), PowerAngularSpectrum(1.0, np.zeros(64))) == 0)
    with pytest.raises(ValueError):
        PowerAngularSpectrum(1.0, -np.ones(64))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 10.0))
def test_extract_cpas_inverts_cscm(seed, gain):
    rng = np.random.default_rng(seed)
    pas = random_pas(rng, gain=gain)
    est = channel.extract_cpas(basis64(), channel.cscm_from_pas(basis64(), pas))
    np.testing.assert_allclose(est, gain * pas.powers, rtol=1e-8, atol=1e-12 * gain)


def test_extract_cpas_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    cov = x @ x.conj().T
    a = basis64().matrix
    expected = [np.vdot(a[:, n], cov @ a[:, n]).real / 64**2 for n in range(64)]
    np.testing.assert_allclose(channel.extract_cpas(basis64(), cov), expected, rtol=1e-12)


def test_extract_cpas_special_matrices():
    np.testing.assert_array_equal(channel.extract_cpas(basis64(), np.zeros((64, 64))), np.zeros(64))
    np.testing.assert_allclose(channel.extract_cpas(basis64(), np.eye(64)), np.full(64, 1 / 64), rtol=1e-12)


def test_extract_cpas_requires_orthogonal_basis():
    literal = channel.steering_basis(ARRAY, mode=STEERING_LITERAL)
    with pytest.raises(ValueError):
        channel.extract_cpas(literal, np.eye(64))


# --- sampling ----------------------------------------------------------------

def test_sample_channels_zero_pas_gives_zero():
    samples = channel.sample_channels(basis64(), PowerAngularSpectrum(1.0, np.zeros(64)), 10, seed=0)
    assert np.all(samples.h == 0)


def test_sample_channels_deterministic():
    pas = random_pas(np.random.default_rng(0))
    a = channel.sample_channels(basis64(), pas, 20, seed=7)
    b = channel.sample_channels(basis64(), pas, 20, seed=7)
    assert np.array_equal(a.h, b.h)


def test_sample_channels_h_is_basis_times_g():
    pas = random_pas(np.random.default_rng(0))
    s = channel.sample_channels(basis64(), pas, 5, seed=1)
    np.testing.assert_allclose(s.h, (basis64().matrix @ s.g.T).T, atol=1e-12)


def test_angular_gains_uncorrelated_monte_carlo():
    t = 100_000
    arr = ArrayGeometry(2, 2)
    basis = channel.steering_basis(arr, mode=DFT_KRONECKER)
    powers = np.array([1.0, 0.5, 2.0, 0.25])
    s = channel.sample_channels(basis, PowerAngularSpectrum(1.5, powers), t, seed=11)
    corr = s.g.T @ s.g.conj() / t
    np.testing.assert_allclose(np.diag(corr).real, 1.5 * powers, rtol=0.05)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 3 / np.sqrt(t) * 1.5 * powers.max()


def test_sample_covariance_converges_to_cscm():
    pas = random_pas(np.random.default_rng(2))
    omega = channel.cscm_from_pas(basis64(), pas)
    est = channel.sample_covariance(channel.sample_channels(basis64(), pas, 100_000, seed=3))
    assert np.linalg.norm(est - omega) / np.linalg.norm(omega) < 0.05


def test_sample_covariance_single_sample_and_hermitian():
    h = np.arange(4) + 1j * np.arange(4)[::-1]
    np.testing.assert_allclose(channel.sample_covariance(h[None]), np.outer(h, h.conj()))
    rng = np.random.default_rng(0)
    hs = rng.normal(size=(30, 64)) + 1j * rng.normal(size=(30, 64))
    cov = channel.sample_covariance(hs)
    assert np.max(np.abs(cov - cov.conj().T)) == 0
    eig = np.linalg.eigvalsh(cov)
    assert eig.min() >= -1e-8 * np.trace(cov).real
    with pytest.raises(ValueError):
        channel.sample_covariance(np.empty((0, 64)))


# --- synthetic PAS field -----------------------------------------------------

def small_field(seed=0):
    return channel.synth_pas_field(GridSpec(16.0, 12), ArrayGeometry(4, 4), ClusterConfig(), seed)


def test_pas_field_nonnegative_and_deterministic():
    a, b = small_field(5), small_field(5)
    assert np.all(a.powers >= 0) and np.all(a.gains > 0)
    assert np.array_equal(a.powers, b.powers) and np.array_equal(a.gains, b.gains)
    assert not np.array_equal(a.powers, small_field(6).powers)


def test_pas_field_spatially_smooth():
    field = small_field(1)
    p = field.powers / np.linalg.norm(field.powers, axis=-1, keepdims=True)
    adjacent = np.concatenate([np.linalg.norm(p[1:] - p[:-1], axis=-1).ravel(),
                               np.linalg.norm(p[:, 1:] - p[:, :-1], axis=-1).ravel()])
    flat = p.reshape(-1, p.shape[-1])
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, len(flat), (2, 2000))
    random_pairs = np.linalg.norm(flat[i] - flat[j], axis=-1)
    assert adjacent.mean() < random_pairs.mean()


@pytest.mark.parametrize("kwargs", [{"num_clusters": 0}, {"angular_spread": 0.0},
                                    {"spatial_correlation_length": -1.0}])
def test_cluster_config_validation(kwargs):
    with pytest.raises(ValueError):
        ClusterConfig(**kwargs)


def test_measure_exact_equals_scaled_powers():
    field = small_field(2)
    basis = channel.steering_basis(ArrayGeometry(4, 4), mode=DFT_KRONECKER)
    exact = channel.measure_cpas_field(basis, field)
    np.testing.assert_allclose(exact, field.gains[..., None] * field.powers, rtol=1e-12)
    sampled = channel.measure_cpas_field(basis, field, slots=4000, seed=0)
    assert np.linalg.norm(sampled - exact) / np.linalg.norm(exact) < 0.05
