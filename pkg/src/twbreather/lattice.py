"""Periodic lattice, zero-symmetric momentum grid and the balanced spectral transform.

Positions are ``z_j = (j - M/2) dz`` so that ``z = 0`` is a lattice point.
Wavenumbers are stored in increasing order (not FFT order). In the default
``balanced`` mode they sit on the half-shifted grid

    k_j = (j - M/2 + 1/2) * 2 pi / L,

which has neither a zero mode nor an unpaired Nyquist mode. The transform
onto this basis is a plain FFT wrapped by a position-dependent phase
(applied before) and a momentum-dependent phase (applied after):

    F_j = post_j * FFT(pre * f)_j / sqrt(M),
    pre_l = exp(-i k_0 z_l),  post_j = exp(-i j dk z_0).

The normalization is unitary, ``sum |f|^2 == sum |F|^2``.

``periodic`` mode uses the ordinary grid ``k_j = (j - M/2) dk``; its
unpaired Nyquist bin is kept as a basis vector but is assigned zero
wavenumber for derivatives and kinetic propagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

GRID_MODES = ("balanced", "periodic")


@dataclass(frozen=True)
class Grid:
    """Immutable 1D lattice shared read-only by all trajectory workers.

    Parameters
    ----------
    M : int
        Number of lattice points (even, at least 8).
    L : float
        Box length; the lattice covers ``[-L/2, L/2)``.
    mode : str
        ``"balanced"`` (half-shifted momenta) or ``"periodic"``.
    """

    M: int
    L: float
    mode: str = "balanced"
    dz: float = field(init=False)
    dk: float = field(init=False)
    z: np.ndarray = field(init=False, repr=False)
    k: np.ndarray = field(init=False, repr=False)
    k_basis: np.ndarray = field(init=False, repr=False)
    pre: np.ndarray = field(init=False, repr=False)
    post: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        M, L = self.M, self.L
        if isinstance(M, bool) or not isinstance(M, (int, np.integer)):
            raise ConfigError(f"M must be an integer, got {M!r}")
        if M < 8 or M % 2:
            raise ConfigError(f"M must be even and >= 8, got {M}")
        if not np.isfinite(L) or L <= 0:
            raise ConfigError(f"L must be positive, got {L}")
        if self.mode not in GRID_MODES:
            raise ConfigError(f"grid_mode must be one of {GRID_MODES}, got {self.mode!r}")

        M = int(M)
        dz = L / M
        dk = 2 * np.pi / L
        z = (np.arange(M) - M // 2) * dz
        shift = 0.5 if self.mode == "balanced" else 0.0
        k_basis = (np.arange(M) - M // 2 + shift) * dk
        k = k_basis.copy()
        if self.mode == "periodic":
            k[0] = 0.0  # unpaired Nyquist bin

        pre = np.exp(-1j * k_basis[0] * z)
        post = np.exp(-1j * np.arange(M) * dk * z[0])
        for name, value in (("dz", dz), ("dk", dk), ("z", z), ("k", k),
                            ("k_basis", k_basis), ("pre", pre), ("post", post)):
            if isinstance(value, np.ndarray):
                value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def center(self) -> int:
        """Index of the lattice point at z = 0."""
        return self.M // 2

    @property
    def k_max(self) -> float:
        return float(np.max(np.abs(self.k)))

    def plane_wave(self, j: int) -> np.ndarray:
        """Basis function ``exp(i k_j z)`` of spectral bin ``j``."""
        return np.exp(1j * self.k_basis[j] * self.z)


def make_grid(M: int, L: float, mode: str = "balanced") -> Grid:
    return Grid(M, float(L), mode)


def _check(arr, grid):
    arr = np.asarray(arr)
    if arr.ndim == 0 or arr.shape[-1] != grid.M:
        raise ShapeError(f"expected trailing axis of length {grid.M}, got shape {arr.shape}")
    return arr


def forward_spectral(field: np.ndarray, grid: Grid) -> np.ndarray:
    """Unitary transform onto the grid's momentum basis (last axis)."""
    field = _check(field, grid)
    return grid.post * np.fft.fft(grid.pre * field, axis=-1, norm="ortho")


def inverse_spectral(spectrum: np.ndarray, grid: Grid) -> np.ndarray:
    """Exact inverse of :func:`forward_spectral`."""
    spectrum = _check(spectrum, grid)
    return np.conj(grid.pre) * np.fft.ifft(np.conj(grid.post) * spectrum, axis=-1, norm="ortho")


def spectral_derivative(field: np.ndarray, grid: Grid) -> np.ndarray:
    """d/dz computed as ``inverse(i k * forward(field))``."""
    return inverse_spectral(1j * grid.k * forward_spectral(field, grid), grid)


def apply_diagonal(field: np.ndarray, diag: np.ndarray, grid: Grid) -> np.ndarray:
    """Multiply by a diagonal operator in momentum space.

    The momentum-dependent phase ``post`` cancels between the forward and
    inverse transforms, so only the position phase is applied here.
    """
    field = _check(field, grid)
    pre = grid.pre
    return np.conj(pre) * np.fft.ifft(diag * np.fft.fft(pre * field, axis=-1), axis=-1)
