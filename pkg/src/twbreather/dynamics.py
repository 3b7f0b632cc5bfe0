"""Truncated-Wigner equation of motion and its RK4 interaction-picture integrator.

The field obeys

    d psi/dt = i d^2 psi/dz^2 - 2 i C psi (|psi|^2 - 1/dz),

where the ``-1/dz`` term is the vacuum correction of the Wigner representation.
The kinetic part is integrated exactly in momentum space; the nonlinear part
is integrated with classical RK4 in the frame co-rotating with the kinetic
propagator. The ``-1/dz`` term only rotates the global phase, so it is
applied exactly together with the kinetic propagator. All routines act on the last axis, so a stack of trajectories of
shape ``(n, M)`` is advanced in one call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import ConfigError, IntegrationError
from .lattice import Grid

NAN_CHECK_MODES = ("snapshot", "step")


@dataclass
class WignerField:
    """A field sample (or a stack of samples) at time ``t``."""

    values: np.ndarray
    t: float = 0.0

    def copy(self) -> "WignerField":
        return WignerField(self.values.copy(), self.t)


@dataclass(frozen=True)
class StepperConfig:
    """Coupling and time discretisation.

    ``snapshot_stride`` is the number of steps between observer calls; the
    final time is always observed even if it is not a multiple of the stride.
    """

    C: float
    dt: float
    n_steps: int
    snapshot_stride: int = 1
    nan_check: str = "snapshot"

    def __post_init__(self):
        if not np.isfinite(self.C):
            raise ConfigError(f"C must be finite, got {self.C}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ConfigError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        if self.nan_check not in NAN_CHECK_MODES:
            raise ConfigError(f"nan_check must be one of {NAN_CHECK_MODES}")

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    def snapshot_steps(self) -> list[int]:
        steps = list(range(0, self.n_steps + 1, self.snapshot_stride))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return steps

    def snapshot_times(self) -> np.ndarray:
        return np.array(self.snapshot_steps(), dtype=float) * self.dt


def _values(field):
    return field.values if isinstance(field, WignerField) else np.asarray(field)


def nonlinear_rhs(field, C: float, dz: float, vacuum_term: bool = True) -> np.ndarray:
    """``-2 i C psi (|psi|^2 - 1/dz)`` pointwise."""
    psi = _values(field)
    n = psi.real**2 + psi.imag**2
    if vacuum_term:
        n = n - 1.0 / dz
    return (-2j * C) * psi * n


def kinetic_phase(grid: Grid, h: float) -> np.ndarray:
    """Exact free propagator ``exp(-i k^2 h)`` per momentum bin."""
    return np.exp(-1j * grid.k**2 * h)


@njit(cache=True)
def _rhs_at(base, k, h, coef, v, out):
    """out = N(base + h k) with N(y) = coef * y * (|y|^2 - v)."""
    flat_b, flat_k, flat_o = base.ravel(), k.ravel(), out.ravel()
    for i in range(flat_b.size):
        y = flat_b[i] + h * flat_k[i]
        flat_o[i] = coef * y * (y.real * y.real + y.imag * y.imag - v)
    return out


@njit(cache=True)
def _axpy(a, k, h, out):
    fa, fk, fo = a.ravel(), k.ravel(), out.ravel()
    for i in range(fa.size):
        fo[i] = fa[i] + h * fk[i]
    return out


@njit(cache=True)
def _combine(a, k1, k2, k3, h, out):
    """out = a + h/6 (k1 + 2 k2 + 2 k3)."""
    fa, f1, f2, f3, fo = a.ravel(), k1.ravel(), k2.ravel(), k3.ravel(), out.ravel()
    w = h / 6.0
    for i in range(fa.size):
        fo[i] = fa[i] + w * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i])
    return out


class Stepper:
    """RK4IP stepper with the half-step kinetic phase precomputed.

    Internally the field is carried in the gauge ``phi = pre * psi``, where
    ``pre`` is the grid's position phase. The nonlinearity depends only on
    ``|psi|`` so it is unchanged by the gauge, and the kinetic kick becomes a
    bare FFT pair. ``backend="numba"`` fuses the pointwise stages;
    ``backend="numpy"`` is the plain array reference.
    """

    def __init__(self, grid: Grid, C: float, dt: float, vacuum_term: bool = True,
                 backend: str = "numba"):
        if backend not in ("numba", "numpy"):
            raise ConfigError(f"unknown backend {backend!r}")
        self.grid = grid
        self.C = C
        self.dt = dt
        self.vacuum_term = vacuum_term
        self.backend = backend
        # the -1/dz term is a uniform frequency, so it joins the exact linear propagator
        shift = 2 * C / grid.dz if vacuum_term else 0.0
        self.half = np.exp(-1j * (grid.k**2 - shift) * (dt / 2))
        self._coef = -2j * C
        self._v = 0.0

    def to_gauge(self, psi):
        return self.grid.pre * psi

    def from_gauge(self, phi):
        return np.conj(self.grid.pre) * phi

    def _kick(self, phi):
        return np.fft.ifft(self.half * np.fft.fft(phi, axis=-1), axis=-1)

    def _step_numpy(self, phi):
        h, coef, v = self.dt, self._coef, self._v

        def rhs(y):
            return coef * y * (y.real**2 + y.imag**2 - v)

        a = self._kick(phi)
        k1 = self._kick(rhs(phi))
        k2 = rhs(a + (h / 2) * k1)
        k3 = rhs(a + (h / 2) * k2)
        k4 = rhs(self._kick(a + h * k3))
        return self._kick(a + (h / 6) * (k1 + 2 * k2 + 2 * k3)) + (h / 6) * k4

    def _step_numba(self, phi):
        h, coef, v = self.dt, self._coef, self._v
        a = self._kick(phi)
        tmp = np.empty_like(a)
        k1 = self._kick(_rhs_at(phi, phi, 0.0, coef, v, tmp))
        k2 = _rhs_at(a, k1, h / 2, coef, v, np.empty_like(a))
        k3 = _rhs_at(a, k2, h / 2, coef, v, np.empty_like(a))
        b = self._kick(_axpy(a, k3, h, tmp))
        k4 = _rhs_at(b, b, 0.0, coef, v, b)
        out = self._kick(_combine(a, k1, k2, k3, h, tmp))
        out += (h / 6) * k4
        return out

    def advance(self, phi: np.ndarray, n: int = 1) -> np.ndarray:
        """Take ``n`` steps of a gauge-frame field (contiguous complex128)."""
        step = self._step_numba if self.backend == "numba" else self._step_numpy
        for _ in range(n):
            phi = step(phi)
        return phi

    def step(self, psi: np.ndarray) -> np.ndarray:
        """One step of a lab-frame field."""
        phi = np.ascontiguousarray(self.to_gauge(psi), dtype=np.complex128)
        return self.from_gauge(self.advance(phi))


def _nonfinite_rows(psi):
    bad = ~np.isfinite(psi).all(axis=-1)
    return np.flatnonzero(np.atleast_1d(bad))


def _guard(psi, t):
    rows = _nonfinite_rows(psi)
    if rows.size:
        raise IntegrationError("non-finite field values", t=t, rows=rows)


def rk4ip_step(field: WignerField, grid: Grid, cfg: StepperConfig) -> WignerField:
    """Advance ``field`` by one step of ``cfg.dt``."""
    _guard(field.values, field.t)
    out = Stepper(grid, cfg.C, cfg.dt).step(field.values)
    t = field.t + cfg.dt
    _guard(out, t)
    return WignerField(out, t)


def _warn_phase(psi, cfg):
    phase = abs(cfg.C) * float(np.max(psi.real**2 + psi.imag**2, initial=0.0)) * cfg.dt
    if phase > 0.1:
        warnings.warn(f"nonlinear phase per step is {phase:.3g} > 0.1; reduce dt", RuntimeWarning,
                      stacklevel=3)


def evolve(field: WignerField, grid: Grid, cfg: StepperConfig,
           observer: Optional[Callable[[WignerField], None]] = None,
           vacuum_term: bool = True, backend: str = "numba") -> WignerField:
    """Integrate to ``cfg.t_final``, calling ``observer`` at every snapshot.

    The observer sees t = 0, every ``snapshot_stride`` steps, and the final
    time. Non-finite values raise :class:`IntegrationError` listing the bad
    rows; they are checked at snapshots, or every step when
    ``cfg.nan_check == "step"``.
    """
    psi = np.array(field.values, dtype=np.complex128)
    t0 = field.t
    if cfg.n_steps:
        _warn_phase(psi, cfg)
    stepper = Stepper(grid, cfg.C, cfg.dt, vacuum_term, backend)
    every_step = cfg.nan_check == "step"

    _guard(psi, t0)
    if observer is not None:
        observer(WignerField(psi, t0))
    phi = np.ascontiguousarray(stepper.to_gauge(psi))
    done = 0
    for target in cfg.snapshot_steps()[1:]:
        if every_step:
            for n in range(done + 1, target + 1):
                phi = stepper.advance(phi)
                _guard(phi, t0 + n * cfg.dt)
        else:
            phi = stepper.advance(phi, target - done)
        done = target
        t = t0 + done * cfg.dt
        _guard(phi, t)
        psi = stepper.from_gauge(phi)
        if observer is not None:
            observer(WignerField(psi, t))
    return WignerField(psi, t0 + cfg.n_steps * cfg.dt)


def meanfield_evolve(alpha, grid: Grid, cfg: StepperConfig,
                     observer: Optional[Callable[[WignerField], None]] = None,
                     vacuum_term: bool = True) -> WignerField:
    """Noise-free evolution of the coherent amplitude.

    With no noise the ``-1/dz`` term is a uniform phase rotation, so it does
    not change any density; ``vacuum_term=False`` drops it.
    """
    return evolve(WignerField(np.asarray(alpha, dtype=np.complex128), 0.0), grid, cfg,
                  observer, vacuum_term)
