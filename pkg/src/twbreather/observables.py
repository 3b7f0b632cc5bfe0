"""Ensemble accumulation and conversion of Wigner averages to normally ordered observables.

Wigner averages are symmetrically ordered. Each lattice mode carries a
vacuum occupation ``v`` (1/2 for Wigner sampling, 0 for a classical
mean-field field), and the conversions used here are

    density      n_j       = <|psi_j|^2> - v/dz
    G2 diagonal  G2_jj     = <|psi_j|^4> - 4 v <|psi_j|^2>/dz + 2 v^2/dz^2
    G1 matrix    G1_jl     = <psi_j^* psi_l> - delta_jl v/dz
    COM          Var(Z)    = Var_W(Z) - v^2 sum_j z_j^2,   Z = dz sum_j z_j |psi_j|^2

The single-mode brute-force check in :mod:`twbreather.oracle` pins these
coefficients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEnsembleError, NumericalError, ShapeError
from .lattice import Grid, spectral_derivative

WIGNER_VACUUM = 0.5


def _values(f):
    return getattr(f, "values", f)


@dataclass
class Accumulators:
    """Running sums over trajectories, one slot per snapshot.

    ``sum_g1`` is only kept at the snapshots listed in ``g1_snaps``.
    Per-trajectory records (``com``, ``invariants``) have one row per
    trajectory and one column per snapshot; ``com`` holds the first moment
    ``Z = dz sum z |psi|^2`` and ``invariants`` holds (N, P, H).
    """

    sum_n: np.ndarray
    sum_n2: np.ndarray
    sum_g1: np.ndarray
    g1_snaps: tuple
    count: int = 0
    traj_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    batch_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    com: np.ndarray = None
    invariants: np.ndarray = None
    _open: int = field(default=0, repr=False)
    _width: int = field(default=0, repr=False)

    def __post_init__(self):
        S = self.n_snap
        if self.com is None:
            self.com = np.zeros((0, S))
        if self.invariants is None:
            self.invariants = np.zeros((0, S, 3))

    @classmethod
    def zeros(cls, M: int, n_snap: int = 1, g1_snaps=(0,)) -> "Accumulators":
        g1_snaps = tuple(int(s) for s in g1_snaps)
        return cls(np.zeros((n_snap, M)), np.zeros((n_snap, M)),
                   np.zeros((len(g1_snaps), M, M), dtype=np.complex128), g1_snaps)

    @property
    def M(self) -> int:
        return self.sum_n.shape[1]

    @property
    def n_snap(self) -> int:
        return self.sum_n.shape[0]

    def g1_slot(self, snapshot: int) -> int:
        try:
            return self.g1_snaps.index(snapshot)
        except ValueError:
            raise KeyError(f"no G1 accumulated at snapshot {snapshot}") from None

    def copy(self) -> "Accumulators":
        return Accumulators(self.sum_n.copy(), self.sum_n2.copy(), self.sum_g1.copy(),
                            self.g1_snaps, self.count, self.traj_ids.copy(),
                            self.batch_ids.copy(), self.com.copy(), self.invariants.copy())


def accumulate(field, acc: Accumulators, batch_id: int = 0, snapshot: int = 0,
               grid: Grid | None = None, C: float | None = None, traj_ids=None) -> Accumulators:
    """Add one field, or a stack of fields, at ``snapshot``.

    Trajectories are registered at snapshot 0 (``count`` grows by the number
    of rows). Later snapshots refer to the rows registered by the most
    recent snapshot-0 call, so a block's snapshots must be supplied before
    the next block starts. Per-trajectory COM and invariants are recorded
    when ``grid`` (and ``C`` for the energy) are given.
    """
    psi = np.atleast_2d(np.asarray(_values(field)))
    if psi.shape[1] != acc.M:
        raise ShapeError(f"field has {psi.shape[1]} points, accumulator expects {acc.M}")
    T = psi.shape[0]
    n = psi.real**2 + psi.imag**2
    acc.sum_n[snapshot] += n.sum(axis=0)
    acc.sum_n2[snapshot] += (n * n).sum(axis=0)
    if snapshot in acc.g1_snaps:
        acc.sum_g1[acc.g1_snaps.index(snapshot)] += psi.conj().T @ psi

    if snapshot == 0:
        if traj_ids is None:
            traj_ids = np.arange(acc.count, acc.count + T)
        acc._open = acc.com.shape[0]
        acc._width = T
        acc.count += T
        acc.traj_ids = np.concatenate([acc.traj_ids, np.asarray(traj_ids, dtype=np.int64)])
        acc.batch_ids = np.concatenate([acc.batch_ids, np.full(T, batch_id, dtype=np.int64)])
        acc.com = np.concatenate([acc.com, np.full((T, acc.n_snap), np.nan)])
        acc.invariants = np.concatenate([acc.invariants, np.full((T, acc.n_snap, 3), np.nan)])
    rows = slice(acc._open, acc._open + T)
    if T != acc._width:
        raise ShapeError("snapshot rows do not match the trajectories registered at snapshot 0")
    if grid is not None:
        acc.com[rows, snapshot] = grid.dz * (n @ grid.z)
        if C is not None:
            acc.invariants[rows, snapshot] = np.stack(classical_invariants(psi, grid, C), axis=-1)
    return acc


def merge(a: Accumulators, b: Accumulators) -> Accumulators:
    """Component-wise sum of two accumulators; per-trajectory records concatenate."""
    if a.sum_n.shape != b.sum_n.shape or a.g1_snaps != b.g1_snaps:
        raise ShapeError(f"cannot merge accumulators of shapes {a.sum_n.shape}/{a.g1_snaps} "
                         f"and {b.sum_n.shape}/{b.g1_snaps}")
    return Accumulators(a.sum_n + b.sum_n, a.sum_n2 + b.sum_n2, a.sum_g1 + b.sum_g1, a.g1_snaps,
                        a.count + b.count, np.concatenate([a.traj_ids, b.traj_ids]),
                        np.concatenate([a.batch_ids, b.batch_ids]),
                        np.concatenate([a.com, b.com]),
                        np.concatenate([a.invariants, b.invariants]))


def _need(acc, k=1):
    if acc.count < k:
        raise EmptyEnsembleError(f"need at least {k} trajectories, have {acc.count}")


def normal_order(mean_n, mean_n2, dz: float, vacuum: float = WIGNER_VACUUM):
    """Convert Wigner moments ``<|psi|^2>``, ``<|psi|^4>`` to ``(n, G2)``."""
    n = mean_n - vacuum / dz
    g2 = mean_n2 - 4 * vacuum * mean_n / dz + 2 * vacuum**2 / dz**2
    return n, g2


def density(acc: Accumulators, grid: Grid, vacuum: float = WIGNER_VACUUM) -> np.ndarray:
    """Normally ordered density, shape ``(n_snap, M)``."""
    _need(acc)
    return normal_order(acc.sum_n / acc.count, 0.0, grid.dz, vacuum)[0]


def g2_diagonal(acc: Accumulators, grid: Grid, vacuum: float = WIGNER_VACUUM) -> np.ndarray:
    """Equal-point second-order correlation ``<psi^+ psi^+ psi psi>``, shape ``(n_snap, M)``."""
    _need(acc, 2)
    return normal_order(acc.sum_n / acc.count, acc.sum_n2 / acc.count, grid.dz, vacuum)[1]


def mu(acc: Accumulators, grid: Grid, N: float, vacuum: float = WIGNER_VACUUM) -> np.ndarray:
    """Integrated correlation ``dz sum_j G2_jj / N^2`` per snapshot."""
    if N <= 0:
        raise ValueError(f"N must be positive, got {N}")
    return grid.dz * g2_diagonal(acc, grid, vacuum).sum(axis=-1) / N**2


def g1_matrix(acc: Accumulators, grid: Grid, snapshot: int = 0,
              vacuum: float = WIGNER_VACUUM) -> np.ndarray:
    """Hermitian ``G1[j, l] = <psi_j^+ psi_l>`` at a snapshot carrying G1 data."""
    _need(acc)
    g1 = acc.sum_g1[acc.g1_slot(snapshot)] / acc.count
    g1 = 0.5 * (g1 + g1.conj().T)
    g1[np.diag_indices_from(g1)] -= vacuum / grid.dz
    return g1


def mode_occupations(G1: np.ndarray, grid: Grid, sigma: float | None = None) -> np.ndarray:
    """Eigenvalues of ``dz * G1`` in descending order (they sum to the number estimate).

    With ``sigma`` given, eigenvalues below ``-3 sigma`` raise a warning.
    """
    G1 = np.asarray(G1)
    if G1.ndim != 2 or G1.shape[0] != G1.shape[1]:
        raise ShapeError(f"G1 must be square, got {G1.shape}")
    try:
        lam = np.linalg.eigvalsh(grid.dz * G1)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed (condition number {np.linalg.cond(G1):.3g})") from exc
    lam = lam[::-1]
    if sigma is not None and lam[-1] < -3 * sigma:
        warnings.warn(f"eigenvalue {lam[-1]:.4g} below -3 sigma ({-3 * sigma:.4g})", RuntimeWarning,
                      stacklevel=2)
    return lam


def classical_invariants(field, grid: Grid, C: float):
    """Per-field number, momentum and energy ``(N, P, H)`` on the lattice."""
    psi = np.asarray(_values(field))
    dpsi = spectral_derivative(psi, grid)
    n = psi.real**2 + psi.imag**2
    dz = grid.dz
    N = dz * n.sum(axis=-1)
    P = dz * np.imag(np.conj(psi) * dpsi).sum(axis=-1)
    H = dz * ((dpsi.real**2 + dpsi.imag**2) + C * n * n).sum(axis=-1)
    return N, P, H


def com_position(field, grid: Grid):
    """Centre of mass ``sum z |psi|^2 / sum |psi|^2``."""
    psi = np.asarray(_values(field))
    n = psi.real**2 + psi.imag**2
    norm = n.sum(axis=-1)
    if np.any(norm == 0):
        raise ValueError("centre of mass of a zero-norm field")
    return (n @ grid.z) / norm


def com_variance(first_moments: np.ndarray, grid: Grid, N: float,
                 vacuum: float = WIGNER_VACUUM) -> np.ndarray:
    """Centre-of-mass variance from per-trajectory ``Z`` samples, shape ``(T, S) -> (S,)``.

    The Wigner variance of ``Z`` exceeds the quantum one by the vacuum
    fluctuation ``v^2 sum z^2`` of the per-mode occupations.
    """
    Z = np.asarray(first_moments)
    if Z.shape[0] < 2:
        raise EmptyEnsembleError("COM variance needs at least 2 trajectories")
    return (np.var(Z, axis=0, ddof=1) - vacuum**2 * np.sum(grid.z**2)) / N**2


def fit_com_spreading(times, var):
    """Least-squares fit ``var = a + b t^2``; returns ``(a, b)``."""
    t2 = np.asarray(times, dtype=float) ** 2
    A = np.stack([np.ones_like(t2), t2], axis=1)
    (a, b), *_ = np.linalg.lstsq(A, np.asarray(var, dtype=float), rcond=None)
    return float(a), float(b)


def batch_error(means):
    """Mean of batch means and its standard error ``std(ddof=1) / sqrt(B)``."""
    means = np.asarray(means, dtype=float)
    B = means.shape[0]
    if B < 2:
        raise EmptyEnsembleError(f"batch error needs at least 2 batches, got {B}")
    return means.mean(axis=0), means.std(axis=0, ddof=1) / np.sqrt(B)
