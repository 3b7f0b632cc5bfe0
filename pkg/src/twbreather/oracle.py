"""Single-mode brute-force check of the ordering corrections.

Symmetrically ordered moments are computed directly from truncated Fock
space operators by averaging every ordering of the operator word, and
Wigner moments by Gauss-Hermite quadrature over the coherent-state Wigner
Gaussian. Neither route uses the correction formulas in
:mod:`twbreather.observables`, which are then checked against both.
"""

from __future__ import annotations

from itertools import permutations
from math import factorial

import numpy as np


def ladder(dim: int) -> np.ndarray:
    """Annihilation operator truncated to ``dim`` Fock states."""
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(np.complex128)


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    log_norm = np.array([0.5 * np.log(float(factorial(int(m)))) for m in n])
    amp = np.exp(-abs(alpha) ** 2 / 2 - log_norm) * np.power(complex(alpha), n)
    return amp


def _expect(state, op):
    return complex(np.vdot(state, op @ state))


def normal_moment(state: np.ndarray, p: int, q: int) -> complex:
    """``<a^+^p a^q>``."""
    a = ladder(state.size)
    op = np.linalg.matrix_power(a.conj().T, p) @ np.linalg.matrix_power(a, q)
    return _expect(state, op)


def symmetric_moment(state: np.ndarray, p: int, q: int) -> complex:
    """Weyl-ordered ``{a^+^p a^q}``: the mean over all orderings of the word."""
    a = ladder(state.size)
    ad = a.conj().T
    words = set(permutations("c" * p + "a" * q))
    total = 0j
    for word in words:
        op = np.eye(state.size, dtype=np.complex128)
        for letter in word:
            op = op @ (ad if letter == "c" else a)
        total += _expect(state, op)
    return total / len(words)


def wigner_moment(alpha: complex, p: int, q: int, order: int = 12) -> complex:
    """``<beta^*^p beta^q>`` over the coherent Wigner Gaussian (variance 1/4 per quadrature)."""
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    s = 0.5
    re = alpha.real + s * x[:, None]
    im = alpha.imag + s * x[None, :]
    beta = re + 1j * im
    return complex(np.sum(w[:, None] * w[None, :] * np.conj(beta) ** p * beta**q))


def single_mode_check(n_coherent: float = 2.0, dz: float = 1.0, dim: int = 60) -> dict:
    """Compare the lattice correction formulas with the brute-force moments.

    The lattice field of a single mode is ``psi = beta / sqrt(dz)``.
    """
    from .observables import normal_order

    alpha = complex(np.sqrt(n_coherent))
    state = coherent_state(alpha, dim)
    w1 = wigner_moment(alpha, 1, 1).real / dz
    w2 = wigner_moment(alpha, 2, 2).real / dz**2
    sym1 = symmetric_moment(state, 1, 1).real / dz
    sym2 = symmetric_moment(state, 2, 2).real / dz**2
    density, g2 = normal_order(w1, w2, dz)
    return {
        "wigner_n": w1,
        "wigner_n2": w2,
        "symmetric_n": sym1,
        "symmetric_n2": sym2,
        "density": density,
        "g2": g2,
        "normal_n": normal_moment(state, 1, 1).real / dz,
        "normal_n2": normal_moment(state, 2, 2).real / dz**2,
    }
