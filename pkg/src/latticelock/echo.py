"""Spin-echo signal of an ion exposed to the lattice.

Analytic forms for the exposure-phase signal under thermal occupation and
quasi-static Gaussian phase jitter, plus the Monte Carlo estimator that
serves as their ground truth and the binomial readout sampler.

The analytic jitter dephasing is a small-jitter approximation; beyond
roughly ``|shift * t| * jitter ~ 0.5`` it overestimates the contrast loss at
the lattice nodes and the Monte Carlo estimator is the reference (see the
echo tests, which pin the approximation boundary).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import (
    IonState,
    MotionalState,
    StandingWaveField,
    lamb_dicke_element,
    stark_shift,
)
from .rng import substream

__all__ = [
    "EchoConfig",
    "MeasurementOutcome",
    "contrast_loss",
    "echo_signal_fock",
    "echo_signal_pure",
    "echo_signal_thermal",
    "monte_carlo_echo",
    "sample_measurement",
]

JITTER_VALIDITY_RMS = 0.3  # rad; the quadratic contrast-loss law degrades above


@dataclass(frozen=True)
class EchoConfig:
    """Exposure time, readout repetitions and phase jitter of one echo block."""

    exposure_time: float
    repetitions: int = 200
    phase_jitter_rms: float = 0.0

    def __post_init__(self):
        if self.exposure_time < 0:
            raise ValueError("exposure time must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.phase_jitter_rms < 0:
            raise ValueError("phase jitter must be >= 0")


@dataclass(frozen=True)
class MeasurementOutcome:
    """Result of N repeated single-shot readouts."""

    successes: int
    repetitions: int

    def __post_init__(self):
        if not 0 <= self.successes <= self.repetitions:
            raise ValueError("successes must lie in [0, repetitions]")

    @property
    def p_up_estimate(self) -> float:
        return self.successes / self.repetitions


def echo_signal_pure(field: StandingWaveField, z, t):
    """Ideal echo signal 0.5*(1 + cos(shift(z) * t)); no decoherence."""
    return 0.5 * (1.0 + np.cos(stark_shift(field, z) * t))


def contrast_loss(n, field: StandingWaveField, z, t, eta: float, dphi: float):
    """Exposure contrast-loss exponent for number state ``n`` under jitter.

    Quadratic in the accumulated antinode phase and in the jitter rms, with
    the spatial profile peaking at the nodes.  Valid for small jitter; a
    warning is emitted above ``JITTER_VALIDITY_RMS``.
    """
    if dphi < 0:
        raise ValueError("dphi must be >= 0")
    if dphi > JITTER_VALIDITY_RMS:
        warnings.warn(
            f"contrast-loss law used outside its small-jitter regime "
            f"(dphi={dphi:.3f} rad > {JITTER_VALIDITY_RMS})",
            stacklevel=2,
        )
    u = field.wavevector * np.asarray(z) + field.phase
    amp = lamb_dicke_element(n, eta) * field.stark_amplitude * np.asarray(t)
    spatial = 1.0 - np.cos(2 * u) + 1.5 * dphi**2 * np.cos(u) ** 2
    return amp**2 * (dphi**2 / 2.0) * np.exp(-(dphi**2)) * spatial


def echo_signal_fock(n, field: StandingWaveField, z, t, eta: float, dphi: float = 0.0):
    """Echo signal for number state ``n`` with jitter-induced contrast loss."""
    gamma = contrast_loss(n, field, z, t, eta, dphi)
    m = lamb_dicke_element(n, eta)
    return 0.5 * (1.0 + np.exp(-gamma) * np.cos(m * stark_shift(field, z) * t))


def echo_signal_thermal(motion: MotionalState, field: StandingWaveField, z, t,
                        eta: float, dphi: float = 0.0):
    """Echo signal averaged over the motional occupation of ``motion``.

    Thermal weights are the bare geometric distribution on the state's
    truncated range; the (bounded) tail mass is exposed rather than
    renormalized away.
    """
    if motion.kind == "fock":
        return echo_signal_fock(motion.n, field, z, t, eta, dphi)
    w = motion.weights()
    levels = np.arange(motion.truncation + 1)
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    out_shape = np.broadcast_shapes(z.shape, t.shape)
    zb = np.broadcast_to(z, out_shape).reshape(-1)
    tb = np.broadcast_to(t, out_shape).reshape(-1)
    s = echo_signal_fock(levels[:, None], field, zb[None, :], tb[None, :], eta, dphi)
    res = w @ s
    return res.reshape(out_shape) if out_shape else float(res[0])


def _sample_thermal_levels(nbar: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exact (untruncated) thermal sampling of occupation numbers."""
    if nbar == 0.0:
        return np.zeros(size, dtype=int)
    return rng.geometric(1.0 / (nbar + 1.0), size=size) - 1


def monte_carlo_echo(ion: IonState, field: StandingWaveField, cfg: EchoConfig,
                     eta: float, seed: int, samples: int = 100_000) -> float:
    """Monte Carlo estimate of the jitter- and motion-averaged echo signal.

    One quasi-static phase draw per shot, occupation drawn from the exact
    (untruncated) thermal law.  Unbiased reference for the analytic forms;
    deterministic for a fixed seed.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = substream(seed, "echo-mc")
    phase = rng.normal(field.phase, cfg.phase_jitter_rms, size=samples)
    if ion.motion.kind == "fock":
        m = np.full(samples, float(lamb_dicke_element(ion.motion.n, eta)))
    else:
        n = _sample_thermal_levels(ion.motion.nbar, samples, rng)
        m = np.asarray(lamb_dicke_element(n, eta))
    acc = m * field.stark_amplitude * np.cos(field.wavevector * ion.position + phase)
    return float(np.mean(0.5 * (1.0 + np.cos(acc * cfg.exposure_time))))


def sample_measurement(p_true: float, repetitions: int, fidelity: float,
                       seed=None) -> MeasurementOutcome:
    """Binomial readout of ``repetitions`` shots through a symmetric error channel.

    Each shot reports the truth with probability ``fidelity`` and the flipped
    outcome otherwise.  ``seed`` may be an integer or a Generator (so callers
    can thread a named substream through repeated measurements).
    """
    if not 0.0 <= p_true <= 1.0:
        raise ValueError("p_true must be in [0, 1]")
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must be in [0, 1]")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if seed is None:
        raise ValueError("a seed (or Generator) is required")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "readout")
    p_eff = fidelity * p_true + (1.0 - fidelity) * (1.0 - p_true)
    k = int(rng.binomial(repetitions, p_eff))
    return MeasurementOutcome(successes=k, repetitions=repetitions)
