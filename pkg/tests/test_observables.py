from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twbreather.errors import EmptyEnsembleError, ShapeError
from twbreather.initial import InitialStateSpec, coherent_amplitude, sample_block
from twbreather.lattice import make_grid
from twbreather.observables import (Accumulators, accumulate, batch_error, classical_invariants,
                                    com_position, com_variance, density, fit_com_spreading,
                                    g1_matrix, g2_diagonal, merge, mode_occupations, mu,
                                    normal_order)

N = 1000


@pytest.fixture(scope="module")
def grid():
    return make_grid(256, 20)


@pytest.fixture(scope="module")
def alpha(grid):
    return coherent_amplitude(grid, InitialStateSpec(N))


@pytest.fixture(scope="module")
def samples(grid, alpha):
    return sample_block(alpha, grid, 3, range(4000))


def _acc(psi, M, **kw):
    acc = Accumulators.zeros(M)
    return accumulate(psi, acc, **kw)


def test_normal_order_single_mode_values():
    n, g2 = normal_order(2.5, 8.5, 1.0)
    assert n == 2.0 and g2 == 4.0


def test_normal_order_classical_is_identity():
    n, g2 = normal_order(3.0, 11.0, 0.1, vacuum=0.0)
    assert n == 3.0 and g2 == 11.0


def test_accumulating_twice_doubles_sums(grid, alpha):
    once = _acc(alpha, grid.M)
    twice = accumulate(alpha, _acc(alpha, grid.M))
    assert np.array_equal(twice.sum_n, 2 * once.sum_n)
    assert np.array_equal(twice.sum_g1, 2 * once.sum_g1)
    assert twice.count == 2
    assert np.array_equal(density(twice, grid), density(once, grid))


def test_empty_accumulator_raises(grid):
    acc = Accumulators.zeros(grid.M)
    with pytest.raises(EmptyEnsembleError):
        density(acc, grid)
    with pytest.raises(EmptyEnsembleError):
        g2_diagonal(_acc(np.zeros(grid.M), grid.M), grid)


def test_wrong_width_rejected(grid):
    with pytest.raises(ShapeError):
        _acc(np.zeros(grid.M + 2), grid.M)
    with pytest.raises(ShapeError):
        merge(Accumulators.zeros(8), Accumulators.zeros(16))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), sizes=st.tuples(*[st.integers(1, 4)] * 3))
def test_merge_is_associative(seed, sizes):
    rng = np.random.default_rng(seed)
    M = 8
    g = make_grid(M, 4)
    parts = []
    for T in sizes:
        psi = rng.standard_normal((T, M)) + 1j * rng.standard_normal((T, M))
        parts.append(accumulate(psi, Accumulators.zeros(M), grid=g, C=-1.0))
    left = merge(merge(parts[0], parts[1]), parts[2])
    right = merge(parts[0], merge(parts[1], parts[2]))
    np.testing.assert_allclose(left.sum_n, right.sum_n, rtol=1e-14)
    np.testing.assert_allclose(left.sum_g1, right.sum_g1, rtol=1e-14, atol=1e-14)
    assert left.count == right.count == sum(sizes)
    assert np.array_equal(left.traj_ids, right.traj_ids)
    np.testing.assert_array_equal(left.com, right.com)


def test_snapshots_follow_registered_rows(grid, alpha):
    acc = Accumulators.zeros(grid.M, n_snap=2)
    accumulate(np.stack([alpha, alpha]), acc, grid=grid)
    with pytest.raises(ShapeError):
        accumulate(alpha, acc, snapshot=1, grid=grid)


def test_vacuum_density_and_mu_vanish(grid):
    psi = sample_block(np.zeros(grid.M), grid, 4, range(4000))
    acc = _acc(psi, grid.M)
    n = density(acc, grid)[0]
    per = np.abs(psi) ** 2
    se = per.std(axis=0, ddof=1) / np.sqrt(len(psi))
    assert np.mean(np.abs(n) < 3 * se) > 0.98
    g2 = g2_diagonal(acc, grid)[0]
    per_g2 = per**2 - 2 * per / grid.dz + 0.5 / grid.dz**2
    se2 = per_g2.std(axis=0, ddof=1) / np.sqrt(len(psi))
    assert np.mean(np.abs(g2) < 3 * se2) > 0.98


def test_initial_density_and_mu(grid, alpha, samples):
    acc = _acc(samples, grid.M)
    n0 = density(acc, grid)[0, grid.center]
    se = np.std(np.abs(samples[:, grid.center]) ** 2, ddof=1) / np.sqrt(len(samples))
    assert abs(n0 - N / 2) < 3 * se
    per = np.abs(samples) ** 2
    v = 0.5
    mu_i = grid.dz * np.sum(per**2 - 4 * v * per / grid.dz + 2 * v**2 / grid.dz**2, axis=1) / N**2
    m = mu(acc, grid, N)[0]
    assert m == pytest.approx(mu_i.mean(), rel=1e-10)
    assert abs(m - 1 / 3) < 3 * mu_i.std(ddof=1) / np.sqrt(len(mu_i))


def test_mu_rejects_nonpositive_n(grid, samples):
    with pytest.raises(ValueError):
        mu(_acc(samples[:4], grid.M), grid, 0)


def test_initial_g1_is_coherent_outer_product(grid, alpha, samples):
    G1 = g1_matrix(_acc(samples, grid.M), grid)
    assert np.allclose(G1, G1.conj().T)
    exact = np.outer(alpha, alpha)
    # off-diagonal sampling error is about |alpha| / sqrt(2 dz T) at the centre
    tol = 4 * (np.abs(alpha).max() + 1 / np.sqrt(2 * grid.dz)) / np.sqrt(2 * grid.dz * len(samples))
    assert np.max(np.abs(G1 - exact)) < tol
    lam = mode_occupations(G1, grid)
    assert lam[0] / N == pytest.approx(1, abs=0.01)
    assert np.sum(lam) == pytest.approx(np.trace(grid.dz * G1).real, rel=1e-10)


def test_g1_requires_recorded_snapshot(grid, alpha):
    with pytest.raises(KeyError):
        g1_matrix(_acc(alpha, grid.M), grid, snapshot=3)


def test_mode_occupations_hand_case():
    g = SimpleNamespace(dz=0.5)
    # two orthonormal modes under the dz-weighted inner product
    u = np.array([1, 1, 0, 0]) / np.sqrt(2 * 0.5)
    w = np.array([0, 0, 1, -1j]) / np.sqrt(2 * 0.5)
    G1 = 7 * np.outer(u.conj(), u) + 3 * np.outer(w.conj(), w)
    lam = mode_occupations(G1, g)
    np.testing.assert_allclose(lam, [7, 3, 0, 0], atol=1e-12)


def test_mode_occupations_warns_on_negative():
    g = SimpleNamespace(dz=1.0)
    with pytest.warns(RuntimeWarning):
        mode_occupations(np.diag([5.0, -1.0]), g, sigma=0.1)
    with pytest.raises(ShapeError):
        mode_occupations(np.zeros((2, 3)), g)


def test_batch_error_example():
    mean, err = batch_error([1, 2, 3, 4])
    assert mean == 2.5
    assert err == pytest.approx(0.6455, abs=1e-4)
    with pytest.raises(EmptyEnsembleError):
        batch_error([1.0])


def test_classical_invariants_of_sech(grid, alpha):
    Nb, P, H = classical_invariants(alpha, grid, -8 / N)
    assert Nb == pytest.approx(N, rel=1e-3)
    assert abs(P) < 1e-9
    assert H == pytest.approx(-7 * N / 3, rel=0.005)


def test_plane_wave_invariants(grid):
    w = grid.plane_wave(140)
    Nb, P, H = classical_invariants(w, grid, 0.0)
    assert Nb == pytest.approx(grid.L)
    assert P == pytest.approx(grid.k[140] * grid.L)
    assert H == pytest.approx(grid.k[140] ** 2 * grid.L)


def test_com_position(grid, alpha):
    # the unpaired edge point z = -L/2 leaves a tiny offset
    assert abs(com_position(alpha, grid)) < 1e-8
    shifted = np.roll(alpha, 10)
    assert com_position(shifted, grid) == pytest.approx(10 * grid.dz, rel=1e-6)
    with pytest.raises(ValueError):
        com_position(np.zeros(grid.M), grid)


def test_com_variance_of_vacuum_is_zero(grid):
    psi = sample_block(np.zeros(grid.M), grid, 5, range(4000))
    Z = grid.dz * (np.abs(psi) ** 2 @ grid.z)
    var = com_variance(Z[:, None], grid, 1.0)[0]
    # sd of a sample variance is about var * sqrt(2 / T)
    scale = 0.25 * np.sum(grid.z**2)
    assert abs(var) < 3 * scale * np.sqrt(2 / len(Z))


def test_com_variance_of_coherent_sech(grid, samples):
    Z = grid.dz * (np.abs(samples) ** 2 @ grid.z)
    var = com_variance(Z[:, None], grid, N)[0]
    assert var == pytest.approx(np.pi**2 / (12 * N), rel=0.15)


def test_fit_com_spreading_exact():
    t = np.linspace(0, 5, 11)
    a, b = fit_com_spreading(t, 0.3 + 0.02 * t**2)
    assert a == pytest.approx(0.3) and b == pytest.approx(0.02)
