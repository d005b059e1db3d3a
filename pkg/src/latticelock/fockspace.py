"""Truncated number-basis operators for the axial harmonic oscillator.

Small dense-matrix machinery used by the kick readout model and by the test
oracles: ladder operators, the displacement operator, and the exact
closed-form matrix elements of exp(i*eta*(a + a^dag)).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln


class TruncationError(ValueError):
    """A truncated-basis computation lost too much probability mass."""


def annihilation(dim: int) -> np.ndarray:
    """Annihilation operator on a ``dim``-level basis."""
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def position_quadrature(dim: int) -> np.ndarray:
    """a + a^dag (dimensionless position quadrature, without the sqrt(2))."""
    a = annihilation(dim)
    return a + a.conj().T


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    """exp(alpha a^dag - alpha* a) on a ``dim``-level basis."""
    a = annihilation(dim)
    return expm(alpha * a.conj().T - np.conjugate(alpha) * a)


class DisplacementFamily:
    """Displacement operators of one dimension, amortized over many amplitudes.

    For real amplitudes the generator r(a^dag - a) is spectrally fixed: one
    Hermitian eigendecomposition of i(a^dag - a) serves every r, which is far
    cheaper than a fresh matrix exponential per amplitude.  Magnitude is all
    the sideband readout needs (populations ignore the displacement phase).
    """

    def __init__(self, dim: int):
        self.dim = dim
        a = annihilation(dim)
        herm = 1j * (a.conj().T - a)
        self._w, self._v = np.linalg.eigh(herm)

    def operator(self, r: float) -> np.ndarray:
        """exp(r (a^dag - a)) for real r."""
        return (self._v * np.exp(-1j * r * self._w)) @ self._v.conj().T


def drive_element(m: int, n: int, eta: float) -> float:
    """|<m| exp(i eta (a+a^dag)) |n>|, exact (untruncated) closed form.

    Magnitude of the sideband coupling between number states; symmetric in
    (m, n).
    """
    if m < 0 or n < 0:
        raise ValueError("levels must be >= 0")
    if m < n:
        m, n = n, m
    d = m - n
    log_pref = 0.5 * (gammaln(n + 1) - gammaln(m + 1)) + d * math.log(eta) if eta > 0 else (
        0.0 if d == 0 else -math.inf)
    if log_pref == -math.inf:
        return 0.0
    val = math.exp(-eta**2 / 2.0 + log_pref) * eval_genlaguerre(n, d, eta**2)
    return abs(float(val))
