"""Trajectory ensembles: planning, block-parallel execution, batching and error bars.

Trajectories are split into error-analysis batches (contiguous index
ranges), and each batch into fixed-size blocks that are integrated as one
``(block, M)`` array. The block layout depends only on the plan, and every
trajectory draws noise from its own keyed stream, so results do not depend
on the number of workers. In deterministic mode block results are reduced
in block order, which makes repeated runs bit-identical.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .dynamics import StepperConfig, WignerField, evolve, meanfield_evolve
from .errors import ConfigError, IntegrationError
from .initial import InitialStateSpec, coherent_amplitude, sample_block
from .lattice import GRID_MODES, Grid, make_grid
from .observables import (Accumulators, accumulate, batch_error, classical_invariants,
                          com_variance, density, g1_matrix, merge, mode_occupations, mu,
                          normal_order)

log = logging.getLogger(__name__)

N_EIG = 8
ABORT_LIMIT = 1e-3
OUTPUT_KINDS = ("density_map", "center_density", "mu", "eigenvalues", "invariants", "com")


@dataclass(frozen=True)
class RunPlan:
    """Everything needed to reproduce an ensemble run.

    ``C=None`` selects the quench coupling ``-8/N``. ``g1_stride`` counts
    snapshots between G1 accumulations (0 disables G1); the final snapshot
    always carries G1 when enabled.
    """

    N: float = 1000.0
    C: Optional[float] = None
    M: int = 256
    L: float = 20.0
    t_final: float = 5.0
    n_steps: int = 10_000
    n_traj: int = 1000
    n_batches: int = 10
    master_seed: int = 0
    snapshot_stride: int = 50
    g1_stride: int = 20
    grid_mode: str = "balanced"
    deterministic: bool = True
    outputs: tuple = OUTPUT_KINDS
    block_size: int = 250
    noise: bool = True
    nan_check: str = "snapshot"
    output_dir: str = "output"

    def __post_init__(self):
        if self.C is None:
            object.__setattr__(self, "C", -8.0 / self.N if self.N > 0 else 0.0)
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.N > 0:
            raise ConfigError(f"N must be positive, got {self.N}")
        if self.M < 8 or self.M & (self.M - 1):
            raise ConfigError(f"M must be a power of two >= 8, got {self.M}")
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if not self.t_final >= 0:
            raise ConfigError(f"t_final must be >= 0, got {self.t_final}")
        if self.n_steps < 1 and self.t_final > 0:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.n_batches < 1 or (self.n_traj > 1 and self.n_traj < self.n_batches):
            raise ConfigError(f"need n_traj >= n_batches >= 1, got {self.n_traj}/{self.n_batches}")
        if self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        if self.g1_stride < 0:
            raise ConfigError(f"g1_stride must be >= 0, got {self.g1_stride}")
        if self.grid_mode not in GRID_MODES:
            raise ConfigError(f"grid_mode must be one of {GRID_MODES}, got {self.grid_mode!r}")
        if self.block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {self.block_size}")
        bad = set(self.outputs) - set(OUTPUT_KINDS)
        if bad:
            raise ConfigError(f"unknown outputs {sorted(bad)}")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps if self.n_steps else 0.0

    def grid(self) -> Grid:
        return make_grid(self.M, self.L, self.grid_mode)

    def stepper(self) -> StepperConfig:
        return StepperConfig(self.C, self.dt if self.n_steps else 1.0, self.n_steps,
                             self.snapshot_stride, self.nan_check)

    def initial(self) -> InitialStateSpec:
        return InitialStateSpec(self.N)

    def snapshot_times(self) -> np.ndarray:
        return self.stepper().snapshot_times()

    def g1_snapshots(self) -> tuple:
        n_snap = len(self.snapshot_times())
        if self.g1_stride == 0:
            return ()
        snaps = list(range(0, n_snap, self.g1_stride))
        if snaps[-1] != n_snap - 1:
            snaps.append(n_snap - 1)
        return tuple(snaps)

    def blocks(self) -> list:
        """``(batch, trajectory ids)`` per block, in reduction order."""
        out = []
        B = min(self.n_batches, self.n_traj)
        for b in range(B):
            lo, hi = b * self.n_traj // B, (b + 1) * self.n_traj // B
            for start in range(lo, hi, self.block_size):
                out.append((b, tuple(range(start, min(start + self.block_size, hi)))))
        return out

    def as_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if f.name == "outputs" else getattr(self, f.name))
                for f in fields(self)}


@dataclass
class ObservableSeries:
    """Time series of corrected observables with batch standard errors.

    ``eig_*`` arrays refer to the G1 snapshot times ``eig_times``; fractions
    are the leading eigenvalues of ``dz G1`` divided by ``N``, descending.
    ``drift`` holds the largest per-trajectory drift of (N, P, H).
    """

    times: np.ndarray
    z: np.ndarray
    density: np.ndarray
    density_err: np.ndarray
    n0: np.ndarray
    n0_err: np.ndarray
    mu: np.ndarray
    mu_err: np.ndarray
    number: np.ndarray
    number_err: np.ndarray
    eig_times: np.ndarray
    eig_fractions: np.ndarray
    eig_err: np.ndarray
    eig_sum: np.ndarray
    eig_sum_err: np.ndarray
    com_var: np.ndarray
    com_var_err: np.ndarray
    drift: np.ndarray
    n0_meanfield: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def _evolve_block(plan: RunPlan, grid: Grid, ids, batch: int) -> Accumulators:
    cfg = plan.stepper()
    alpha = coherent_amplitude(grid, plan.initial())
    if plan.noise:
        psi0 = sample_block(alpha, grid, plan.master_seed, ids)
    else:
        psi0 = np.tile(alpha, (len(ids), 1))
    acc = Accumulators.zeros(grid.M, len(plan.snapshot_times()), plan.g1_snapshots())
    snap = iter(range(acc.n_snap))

    def observe(f):
        accumulate(f, acc, batch, next(snap), grid, plan.C, traj_ids=ids)

    evolve(WignerField(psi0, 0.0), grid, cfg, observe)
    return acc


def run_block(plan: RunPlan, batch: int, ids) -> tuple:
    """Integrate one block; trajectories that go non-finite are dropped and the rest rerun."""
    grid = plan.grid()
    ids = list(ids)
    aborted = []
    while ids:
        try:
            return _evolve_block(plan, grid, ids, batch), aborted
        except IntegrationError as exc:
            bad = [ids[r] for r in exc.rows]
            log.warning("aborting trajectories %s at t=%s", bad, exc.t)
            aborted.extend(bad)
            ids = [i for i in ids if i not in bad]
    acc = Accumulators.zeros(grid.M, len(plan.snapshot_times()), plan.g1_snapshots())
    return acc, aborted


def _run_block_star(args):
    return run_block(*args)


def _execute(plan: RunPlan, workers: int):
    """Run all blocks; returns per-batch accumulators and aborted ids."""
    blocks = plan.blocks()
    n_batch = blocks[-1][0] + 1
    batches: list = [None] * n_batch
    aborted: list = []
    tasks = [(plan, b, ids) for b, ids in blocks]
    t_start = time.perf_counter()
    done = 0
    next_beat = 1000

    def absorb(b, acc, bad):
        nonlocal done, next_beat
        batches[b] = acc if batches[b] is None else merge(batches[b], acc)
        aborted.extend(bad)
        done += acc.count + len(bad)
        if done >= next_beat or done == plan.n_traj:
            elapsed = time.perf_counter() - t_start
            eta = elapsed * (plan.n_traj - done) / max(done, 1)
            log.info("%d/%d trajectories, %.1fs elapsed, ETA %.1fs", done, plan.n_traj, elapsed, eta)
            next_beat = (done // 1000 + 1) * 1000

    if workers <= 1:
        for task in tasks:
            absorb(task[1], *run_block(*task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            if plan.deterministic:
                for (b, _), res in zip(blocks, pool.map(_run_block_star, tasks)):
                    absorb(b, *res)
            else:
                futures = {pool.submit(run_block, *t): t[1] for t in tasks}
                for fut in as_completed(futures):
                    absorb(futures[fut], *fut.result())
    return batches, sorted(aborted)


def _meanfield_track(plan: RunPlan, grid: Grid):
    """Noise-free fields at every snapshot, shape ``(n_snap, M)``."""
    out = []
    alpha = coherent_amplitude(grid, plan.initial())
    meanfield_evolve(alpha, grid, plan.stepper(), lambda f: out.append(f.values.copy()))
    return np.array(out)


def _drift(inv: np.ndarray, grid: Grid) -> np.ndarray:
    """Largest drift over trajectories of (N, P, H), shape ``(T, S, 3) -> (S, 3)``."""
    inv = inv[~np.isnan(inv).any(axis=(1, 2))]
    if inv.shape[0] == 0:
        return np.full((0, 3), np.nan)
    N0, P0, H0 = inv[:, :1, 0], inv[:, :1, 1], inv[:, :1, 2]
    dN = np.abs(inv[..., 0] - N0) / np.abs(N0)
    dP = np.abs(inv[..., 1] - P0) / (np.abs(N0) * grid.k_max)
    dH = np.abs(inv[..., 2] - H0) / np.abs(H0)
    return np.stack([dN.max(axis=0), dP.max(axis=0), dH.max(axis=0)], axis=-1)


def _top(lam, k=N_EIG):
    out = np.zeros(k)
    out[:min(k, lam.size)] = lam[:k]
    return out


def assemble_series(batches: list, plan: RunPlan, grid: Grid, meanfield=None) -> ObservableSeries:
    """Combine per-batch accumulators into observables with batch error bars."""
    batches = [b for b in batches if b is not None and b.count > 0]
    if not batches:
        raise IntegrationError("every trajectory aborted")
    total = batches[0]
    for b in batches[1:]:
        total = merge(total, b)
    N, c = plan.N, grid.center
    times = plan.snapshot_times()
    g1_snaps = plan.g1_snapshots()

    def stats(values):
        values = np.asarray(values)
        if len(values) < 2:
            return values[0], np.zeros_like(values[0])
        return batch_error(values)

    dens = [density(b, grid) for b in batches]
    d_mean, d_err = stats(dens)
    number = [grid.dz * d.sum(axis=-1) for d in dens]
    mus = [mu(b, grid, N) if b.count >= 2 else np.full(len(times), np.nan) for b in batches]
    com = [com_variance(b.com, grid, N) if b.count >= 2 else np.full(len(times), np.nan)
           for b in batches]

    eig_total, eig_batches, trace_batches = [], [], []
    for s in g1_snaps:
        eig_total.append(_top(mode_occupations(g1_matrix(total, grid, s), grid)) / N)
        lam_b = [mode_occupations(g1_matrix(b, grid, s), grid) for b in batches]
        eig_batches.append([_top(lam) / N for lam in lam_b])
        trace_batches.append([lam.sum() for lam in lam_b])
    G = len(g1_snaps)
    if G:
        eig_err = np.array([stats(e)[1] for e in eig_batches])
        eig_sum, eig_sum_err = (np.array(x) for x in zip(*(stats(t) for t in trace_batches)))
    else:
        eig_err = np.zeros((0, N_EIG))
        eig_sum = eig_sum_err = np.zeros(0)

    n0_mf = None
    if meanfield is not None:
        n0_mf = np.abs(meanfield[:, c]) ** 2

    return ObservableSeries(
        times=times, z=grid.z.copy(),
        density=d_mean, density_err=d_err,
        n0=d_mean[:, c], n0_err=d_err[:, c],
        mu=stats(mus)[0], mu_err=stats(mus)[1],
        number=stats(number)[0], number_err=stats(number)[1],
        eig_times=times[list(g1_snaps)], eig_fractions=np.array(eig_total).reshape(G, N_EIG),
        eig_err=eig_err.reshape(G, N_EIG), eig_sum=eig_sum, eig_sum_err=eig_sum_err,
        com_var=stats(com)[0], com_var_err=stats(com)[1],
        drift=_drift(total.invariants, grid),
        n0_meanfield=n0_mf,
        meta={"n_traj": plan.n_traj, "n_batches": len(batches), "completed": total.count,
              "ordering": "full symmetric-to-normal correction"},
    )


def run_ensemble(plan: RunPlan, workers: int = 1, meanfield: bool = True) -> ObservableSeries:
    """Integrate ``plan.n_traj`` Wigner trajectories and assemble their observables.

    Trajectory ``i`` draws its noise from ``seed_stream(master_seed, i)``.
    Aborted trajectories are excluded and counted; more than 0.1% aborted
    fails the run.
    """
    t0 = time.perf_counter()
    grid = plan.grid()
    batches, aborted = _execute(plan, workers)
    if len(aborted) > ABORT_LIMIT * plan.n_traj:
        raise IntegrationError(f"{len(aborted)} of {plan.n_traj} trajectories aborted")
    mf = _meanfield_track(plan, grid) if meanfield else None
    series = assemble_series(batches, plan, grid, mf)
    series.meta.update(aborted=len(aborted), aborted_ids=aborted, workers=workers,
                       wall_time=time.perf_counter() - t0)
    return series


def run_meanfield(plan: RunPlan) -> ObservableSeries:
    """Single noise-free trajectory with classical (unordered) observables."""
    t0 = time.perf_counter()
    grid = plan.grid()
    psi = _meanfield_track(plan, grid)
    n = psi.real**2 + psi.imag**2
    S, M = n.shape
    dens, g2 = normal_order(n, n * n, grid.dz, vacuum=0.0)
    zeros = np.zeros(S)
    inv = np.stack(classical_invariants(psi, grid, plan.C), axis=-1)[None]
    g1_snaps = plan.g1_snapshots()
    eig = []
    for s in g1_snaps:
        g1 = np.outer(psi[s].conj(), psi[s])
        eig.append(mode_occupations(g1, grid))
    eig_sum = np.array([lam.sum() for lam in eig])
    G = len(g1_snaps)
    return ObservableSeries(
        times=plan.snapshot_times(), z=grid.z.copy(),
        density=dens, density_err=np.zeros_like(dens),
        n0=dens[:, grid.center], n0_err=zeros,
        mu=grid.dz * g2.sum(axis=-1) / plan.N**2, mu_err=zeros,
        number=grid.dz * dens.sum(axis=-1), number_err=zeros,
        eig_times=plan.snapshot_times()[list(g1_snaps)],
        eig_fractions=np.array([_top(lam) for lam in eig]).reshape(G, N_EIG) / plan.N,
        eig_err=np.zeros((G, N_EIG)), eig_sum=eig_sum, eig_sum_err=np.zeros(G),
        com_var=np.full(S, np.nan), com_var_err=np.full(S, np.nan),
        drift=_drift(inv, grid), n0_meanfield=dens[:, grid.center].copy(),
        meta={"n_traj": 1, "n_batches": 1, "completed": 1, "aborted": 0, "aborted_ids": [],
              "ordering": "classical field, no correction",
              "wall_time": time.perf_counter() - t0},
    )


def center_density_paired(plan: RunPlan, ids) -> np.ndarray:
    """Corrected ``n(0, t)`` averaged over a fixed set of trajectories."""
    grid = plan.grid()
    cfg = plan.stepper()
    alpha = coherent_amplitude(grid, plan.initial())
    psi0 = sample_block(alpha, grid, plan.master_seed, ids) if plan.noise else alpha[None]
    vacuum = 0.5 if plan.noise else 0.0
    out = []
    evolve(WignerField(psi0, 0.0), grid, cfg,
           lambda f: out.append(np.mean(np.abs(f.values[:, grid.center]) ** 2)))
    return np.array(out) - vacuum / grid.dz


def convergence_check(plan: RunPlan, n_pairs: int = 8, levels: int = 3,
                      tolerance: float = 1e-4) -> dict:
    """Step-doubling study on ``n(0, t)`` with identical noise realisations.

    Runs ``levels`` time steps ``dt, dt/2, dt/4, ...`` on the same snapshot
    times, and reports the relative max discrepancy between successive
    levels together with the fitted order ``log2(d_k / d_{k+1})``.
    """
    ids = list(range(n_pairs))
    curves, dts = [], []
    for level in range(levels):
        p = replace(plan, n_steps=plan.n_steps * 2**level,
                    snapshot_stride=plan.snapshot_stride * 2**level)
        dts.append(p.dt)
        curves.append(center_density_paired(p, ids))
    ref_scale = np.max(np.abs(curves[-1]))
    disc = [float(np.max(np.abs(a - b)) / ref_scale) for a, b in zip(curves, curves[1:])]
    orders = [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan")
              for a, b in zip(disc, disc[1:])]
    return {"dt": dts, "discrepancy": disc, "order": orders,
            "passed": bool(disc[0] < tolerance), "tolerance": tolerance}
