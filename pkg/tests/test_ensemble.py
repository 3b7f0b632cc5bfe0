from dataclasses import replace

import numpy as np
import pytest

from twbreather import ensemble
from twbreather.ensemble import (RunPlan, convergence_check, run_block, run_ensemble,
                                 run_meanfield)
from twbreather.errors import ConfigError, IntegrationError

SMALL = RunPlan(N=1000, M=64, L=20, t_final=0.5, n_steps=250, n_traj=40, n_batches=4,
                snapshot_stride=25, g1_stride=5, block_size=10, master_seed=3)


@pytest.fixture(scope="module")
def small_series():
    return run_ensemble(SMALL)


def test_default_plan_matches_desk_scale():
    p = RunPlan()
    assert p.C == pytest.approx(-0.008)
    assert p.dt == pytest.approx(5e-4)
    assert len(p.snapshot_times()) == 201


@pytest.mark.parametrize("kw", [dict(M=100), dict(N=0), dict(n_traj=3, n_batches=4),
                                dict(outputs=("bogus",)), dict(grid_mode="odd"),
                                dict(block_size=0), dict(L=-1)])
def test_invalid_plans(kw):
    with pytest.raises(ConfigError):
        replace(SMALL, **kw)


def test_blocks_partition_trajectories():
    p = replace(SMALL, n_traj=37, n_batches=4, block_size=4)
    ids = [i for _, block in p.blocks() for i in block]
    assert ids == list(range(37))
    batches = [b for b, _ in p.blocks()]
    assert batches == sorted(batches) and set(batches) == {0, 1, 2, 3}


def test_g1_snapshots_include_final():
    assert SMALL.g1_snapshots() == (0, 5, 10)
    assert replace(SMALL, g1_stride=3).g1_snapshots() == (0, 3, 6, 9, 10)
    assert replace(SMALL, g1_stride=0).g1_snapshots() == ()


def test_series_shapes(small_series):
    s = small_series
    S = len(SMALL.snapshot_times())
    assert s.density.shape == (S, SMALL.M)
    assert s.n0.shape == s.mu.shape == s.com_var.shape == (S,)
    assert s.eig_fractions.shape == (3, ensemble.N_EIG)
    assert s.drift.shape == (S, 3)
    assert s.meta["completed"] == 40 and s.meta["aborted"] == 0
    assert np.all(s.n0_err > 0)


def test_number_and_eigenvalue_sum_agree(small_series):
    s = small_series
    # the trace of dz G1 is the corrected number at the same snapshot
    idx = [list(s.times).index(t) for t in s.eig_times]
    np.testing.assert_allclose(s.eig_sum, s.number[idx], rtol=1e-9)


def test_deterministic_repeat_is_bit_identical(small_series):
    again = run_ensemble(SMALL)
    for name in ("density", "density_err", "mu", "eig_fractions", "com_var", "drift"):
        assert np.array_equal(getattr(again, name), getattr(small_series, name), equal_nan=True)


def test_workers_do_not_change_results(small_series):
    par = run_ensemble(SMALL, workers=2)
    for name in ("density", "density_err", "mu", "mu_err", "eig_fractions", "com_var"):
        assert np.array_equal(getattr(par, name), getattr(small_series, name))


def test_unordered_reduction_matches_to_rounding(small_series):
    free = run_ensemble(replace(SMALL, deterministic=False), workers=2)
    np.testing.assert_allclose(free.density, small_series.density, rtol=1e-12, atol=1e-9)


def test_block_size_only_changes_rounding(small_series):
    other = run_ensemble(replace(SMALL, block_size=3))
    np.testing.assert_allclose(other.density, small_series.density, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(other.mu, small_series.mu, rtol=1e-12)


def test_trajectory_depends_only_on_its_index():
    a, _ = run_block(SMALL, 0, [5, 6])
    b, _ = run_block(SMALL, 0, [6])
    c, _ = run_block(SMALL, 0, [5])
    np.testing.assert_allclose(a.sum_n, b.sum_n + c.sum_n, rtol=1e-13)


def test_seed_changes_noise(small_series):
    other = run_ensemble(replace(SMALL, master_seed=4))
    assert not np.array_equal(other.density, small_series.density)


def test_noise_off_reduces_to_meanfield():
    p = replace(SMALL, noise=False, n_traj=4, n_batches=2)
    s = run_ensemble(p)
    # the pure coherent field has no vacuum share, so compare raw against classical
    m = run_meanfield(p)
    np.testing.assert_allclose(s.density + 0.5 / p.grid().dz, m.density, rtol=1e-12, atol=1e-12)
    assert np.all(s.density_err == 0)
    np.testing.assert_allclose(s.n0_meanfield, m.n0, rtol=1e-12)


def test_meanfield_initial_values():
    s = run_meanfield(replace(SMALL, M=256))
    assert s.n0[0] == pytest.approx(500, rel=1e-12)
    assert s.mu[0] == pytest.approx(1 / 3, rel=1e-3)
    assert s.eig_fractions[0, 0] == pytest.approx(1, rel=1e-3)
    assert np.all(s.eig_fractions[:, 1:] < 1e-10)
    assert np.isnan(s.com_var).all()
    assert s.meta["ordering"].startswith("classical")


def test_abort_accounting(monkeypatch):
    real = ensemble.sample_block

    def poisoned(alpha, grid, seed, ids):
        psi = real(alpha, grid, seed, ids)
        for r, i in enumerate(ids):
            if i == 3:
                psi[r, 0] = np.nan
        return psi

    monkeypatch.setattr(ensemble, "sample_block", poisoned)
    acc, aborted = run_block(SMALL, 0, range(10))
    assert aborted == [3]
    assert acc.count == 9 and 3 not in acc.traj_ids
    with pytest.raises(IntegrationError, match="1 of 40"):
        run_ensemble(SMALL)
    s = run_ensemble(replace(SMALL, n_traj=2000, t_final=0.01, n_steps=5, snapshot_stride=5, g1_stride=0,
                             block_size=500), meanfield=False)
    assert s.meta["aborted"] == 1 and s.meta["aborted_ids"] == [3]
    assert s.meta["completed"] == 1999


def test_convergence_is_trivial_without_interaction():
    p = replace(SMALL, C=0.0)
    report = convergence_check(p, n_pairs=2, levels=2)
    assert report["passed"]
    assert report["discrepancy"][0] < 1e-12


def test_convergence_report_shape():
    p = replace(SMALL, n_steps=100, snapshot_stride=10)
    report = convergence_check(p, n_pairs=2, levels=3)
    assert len(report["dt"]) == 3 and len(report["discrepancy"]) == 2
    assert len(report["order"]) == 1
    assert report["dt"][1] == pytest.approx(report["dt"][0] / 2)
