"""Lattice geometry, differential light-shift field, and motional-state primitives.

Everything downstream (spin-echo signals, the phase lock, kicks, position
mapping) is built on the types and closed forms defined here.  Units are SI
throughout; angles and phases are radians, angular frequencies rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import atomic_mass, hbar
from scipy.special import eval_laguerre

__all__ = [
    "CA40_ION_MASS",
    "DEFAULT_LATTICE_PERIOD",
    "IonState",
    "MotionalState",
    "PhysicalParams",
    "StandingWaveField",
    "ground_state_size",
    "lamb_dicke_element",
    "lattice_period",
    "min_truncation",
    "stark_shift",
    "thermal_tail_mass",
    "thermal_weights",
]

# 40Ca+ (neutral 40Ca minus one electron mass is a 1e-5 relative correction,
# far below anything resolved here).
CA40_ION_MASS = 39.9625909 * atomic_mass

# Default lattice period: 397 nm beams enclosing ~99.5 deg, i.e. the geometry
# whose 2.5% period position jitter corresponds to 6.5 nm.
DEFAULT_LATTICE_PERIOD = 260e-9

MIN_BEAM_ANGLE = 1e-6


def beam_angle_for_period(lambda_laser: float, period: float) -> float:
    """Beam opening angle that produces the requested lattice period."""
    s = lambda_laser / (2.0 * period)
    if not 0.0 < s <= 1.0:
        raise ValueError(f"period {period} not reachable at wavelength {lambda_laser}")
    return 2.0 * math.asin(s)


@dataclass(frozen=True)
class PhysicalParams:
    """Fixed physical parameters of the ion / laser system.

    Attributes
    ----------
    lambda_laser : float
        Lattice laser wavelength (m).
    beam_angle : float
        Angle enclosed by the two lattice beams (rad), in (0, pi].
    detuning : float
        Laser detuning from the dipole transition (rad/s).
    trap_freq : float
        Axial secular trap frequency (rad/s).
    lamb_dicke : float
        Lamb-Dicke factor of the lattice wavevector at the trap frequency.
    ion_mass : float
        Ion mass (kg).
    readout_fidelity : float
        Probability that a single-shot state readout reports the true state.
    """

    lambda_laser: float = 397e-9
    beam_angle: float = field(
        default_factory=lambda: beam_angle_for_period(397e-9, DEFAULT_LATTICE_PERIOD)
    )
    detuning: float = 2 * math.pi * 30e9
    trap_freq: float = 2 * math.pi * 1.41e6
    lamb_dicke: float = 0.21
    ion_mass: float = CA40_ION_MASS
    readout_fidelity: float = 0.99

    def __post_init__(self):
        if self.lambda_laser <= 0 or self.detuning <= 0 or self.trap_freq <= 0:
            raise ValueError("wavelength, detuning and trap frequency must be positive")
        if not MIN_BEAM_ANGLE <= self.beam_angle <= math.pi:
            raise ValueError(f"beam angle {self.beam_angle} outside ({MIN_BEAM_ANGLE}, pi]")
        if not 0.0 < self.lamb_dicke < 1.0:
            raise ValueError("Lamb-Dicke factor must be in (0, 1)")
        if self.ion_mass <= 0:
            raise ValueError("ion mass must be positive")
        if not 0.0 < self.readout_fidelity <= 1.0:
            raise ValueError("readout fidelity must be in (0, 1]")


def lattice_period(params: PhysicalParams) -> float:
    """Period of the polarization lattice formed by the two beams.

    Degenerates to lambda/2 for counter-propagating beams and diverges as the
    beams become parallel; angles below ``MIN_BEAM_ANGLE`` are rejected.
    """
    alpha = params.beam_angle
    if not MIN_BEAM_ANGLE <= alpha <= math.pi:
        raise ValueError(f"beam angle {alpha} outside ({MIN_BEAM_ANGLE}, pi]")
    return params.lambda_laser / (2.0 * math.sin(alpha / 2.0))


@dataclass(frozen=True)
class StandingWaveField:
    """Differential light-shift field of the lattice.

    ``phase`` is stored unwrapped: interferometer drifts of several pi must
    accumulate without branch cuts, so no modular reduction happens here.
    """

    stark_amplitude: float  # peak differential shift (rad/s)
    wavevector: float       # 2*pi / lattice period (1/m)
    phase: float = 0.0      # instantaneous interferometer phase (rad)

    def __post_init__(self):
        if self.stark_amplitude < 0:
            raise ValueError("stark amplitude must be >= 0")
        if self.wavevector <= 0:
            raise ValueError("wavevector must be positive")

    @classmethod
    def from_params(cls, params: PhysicalParams, stark_amplitude: float,
                    phase: float = 0.0) -> "StandingWaveField":
        return cls(stark_amplitude=stark_amplitude,
                   wavevector=2 * math.pi / lattice_period(params),
                   phase=phase)

    def period(self) -> float:
        return 2 * math.pi / self.wavevector


def stark_shift(field: StandingWaveField, z):
    """Differential light shift at axial position(s) ``z`` (rad/s)."""
    return field.stark_amplitude * np.cos(field.wavevector * z + field.phase)


def lamb_dicke_element(n, eta: float):
    """Diagonal motional matrix element of the lattice cosine for level ``n``.

    Closed form exp(-eta^2/2) * L_n(eta^2); the test suite checks it against
    a brute-force operator construction in a truncated number basis.
    """
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("n must be >= 0")
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must be in [0, 1)")
    return np.exp(-eta**2 / 2.0) * eval_laguerre(n, eta**2)


def thermal_weights(nbar: float, truncation: int) -> np.ndarray:
    """Occupation probabilities of a thermal state on levels 0..truncation.

    Deliberately *not* renormalized: the missing tail mass is the truncation
    error and stays observable (see ``thermal_tail_mass``).
    """
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    n = np.arange(truncation + 1)
    if nbar == 0.0:
        w = np.zeros(truncation + 1)
        w[0] = 1.0
        return w
    # log-space keeps large-n weights from underflowing pairwise operations
    return np.exp(n * np.log(nbar) - (n + 1) * np.log(nbar + 1.0))


def thermal_tail_mass(nbar: float, truncation: int) -> float:
    """Exact probability mass above the cutoff: (nbar/(nbar+1))**(truncation+1)."""
    if nbar <= 0:
        return 0.0
    return float(np.exp((truncation + 1) * (np.log(nbar) - np.log(nbar + 1.0))))


def min_truncation(nbar: float, tail: float = 1e-3) -> int:
    """Smallest cutoff whose thermal tail mass is below ``tail``."""
    if nbar <= 0:
        return 0
    t = math.ceil(math.log(tail) / (math.log(nbar) - math.log(nbar + 1.0)) - 1.0)
    t = max(t, 0)
    while thermal_tail_mass(nbar, t) >= tail:  # guard against rounding at the edge
        t += 1
    return t


@dataclass(frozen=True)
class MotionalState:
    """Axial motional state: a pure number state or a thermal mixture.

    For thermal states the cutoff is grown automatically until at least
    99.9% of the distribution is contained, so downstream sums stay within
    their stated tolerance without each caller re-deriving the bound.
    """

    kind: str                  # "fock" | "thermal"
    n: int = 0                 # occupation number     (fock)
    nbar: float = 0.0          # mean occupation       (thermal)
    truncation: int = 200

    THERMAL_TAIL = 1e-3

    def __post_init__(self):
        if self.kind not in ("fock", "thermal"):
            raise ValueError(f"unknown motional kind {self.kind!r}")
        if self.truncation <= 0:
            raise ValueError("truncation must be positive")
        if self.kind == "fock":
            if self.n < 0:
                raise ValueError("Fock index must be >= 0")
        else:
            if self.nbar < 0:
                raise ValueError("nbar must be >= 0")
            need = min_truncation(self.nbar, self.THERMAL_TAIL)
            if self.truncation < need:
                object.__setattr__(self, "truncation", need)

    @classmethod
    def fock(cls, n: int, truncation: int = 200) -> "MotionalState":
        return cls(kind="fock", n=n, truncation=max(truncation, n + 1))

    @classmethod
    def thermal(cls, nbar: float, truncation: int = 200) -> "MotionalState":
        return cls(kind="thermal", nbar=nbar, truncation=truncation)

    def weights(self) -> np.ndarray:
        """Level populations on 0..truncation."""
        if self.kind == "fock":
            w = np.zeros(self.truncation + 1)
            w[self.n] = 1.0
            return w
        return thermal_weights(self.nbar, self.truncation)

    def with_truncation(self, truncation: int) -> "MotionalState":
        return replace(self, truncation=truncation)


@dataclass(frozen=True)
class IonState:
    """Spin projection, axial position and motional state of the ion."""

    spin_mj: float            # +0.5 or -0.5
    position: float = 0.0     # axial position z (m)
    motion: MotionalState = field(default_factory=lambda: MotionalState.fock(0))

    def __post_init__(self):
        if self.spin_mj not in (+0.5, -0.5):
            raise ValueError("spin_mj must be +0.5 or -0.5")


def ground_state_size(params: PhysicalParams) -> float:
    """RMS extent of the motional ground state wavepacket (m)."""
    return math.sqrt(hbar / (2.0 * params.ion_mass * params.trap_freq))
