"""Coherent initial amplitude and Wigner vacuum-noise sampling.

Every trajectory draws from its own counter-based stream keyed by
``(master_seed, trajectory_index)``, so a given trajectory's noise does not
depend on which worker runs it or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import WignerField
from .errors import ConfigError
from .lattice import Grid

_U64 = 2**64


@dataclass(frozen=True)
class InitialStateSpec:
    """Mean particle number ``N`` in a sech mode centred at ``center``.

    The coherent amplitude is that of the fundamental soliton at the
    pre-quench coupling ``-2/N``.
    """

    N: float
    center: float = 0.0
    profile: str = "sech"

    def __post_init__(self):
        if not np.isfinite(self.N) or self.N < 0:
            raise ConfigError(f"N must be non-negative, got {self.N}")
        if self.profile != "sech":
            raise ConfigError(f"unsupported profile {self.profile!r}")


@dataclass(frozen=True)
class NoiseSpec:
    master_seed: int
    trajectory_index: int


def coherent_amplitude(grid: Grid, spec: InitialStateSpec) -> np.ndarray:
    """``alpha_j = sqrt(N/2) sech(z_j - center)`` as a complex array."""
    alpha = np.sqrt(spec.N / 2) / np.cosh(grid.z - spec.center)
    return alpha.astype(np.complex128)


def seed_stream(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Philox stream keyed by the (seed, index) pair; no state shared between keys."""
    if trajectory_index < 0:
        raise ConfigError(f"trajectory_index must be >= 0, got {trajectory_index}")
    key = np.array([int(trajectory_index) % _U64, int(master_seed) % _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def vacuum_noise(grid: Grid, master_seed: int, trajectory_index: int) -> np.ndarray:
    """Complex unit Gaussians ``zeta_j``: <|zeta|^2> = 1, <zeta^2> = 0."""
    x = seed_stream(master_seed, trajectory_index).standard_normal((2, grid.M))
    return (x[0] + 1j * x[1]) * np.sqrt(0.5)


def sample_wigner(alpha: np.ndarray, grid: Grid, noise: NoiseSpec) -> WignerField:
    """One Wigner sample ``psi_j = alpha_j + zeta_j / sqrt(2 dz)``.

    White noise per lattice point is the same distribution as independent
    noise per momentum mode because the spectral transform is unitary.
    """
    zeta = vacuum_noise(grid, noise.master_seed, noise.trajectory_index)
    return WignerField(np.asarray(alpha) + zeta / np.sqrt(2 * grid.dz), 0.0)


def sample_block(alpha: np.ndarray, grid: Grid, master_seed: int, indices) -> np.ndarray:
    """Stack of Wigner samples for the given trajectory indices, shape ``(len(indices), M)``."""
    indices = list(indices)
    out = np.empty((len(indices), grid.M), dtype=np.complex128)
    scale = 1 / np.sqrt(2 * grid.dz)
    for row, i in enumerate(indices):
        out[row] = alpha + scale * vacuum_noise(grid, master_seed, i)
    return out
