"""Closed-loop stabilization of the interferometer phase via the ion position.

The loop measures the echo signal at an operating point halfway between a
node and an antinode, converts the signal deviation into a phase-error
estimate through the analytic slope, and feeds back on the ion position
through the shift-electrode voltage (quantized to the DAC resolution).
Stabilization slots can be interleaved with science slots (duty cycle < 1),
during which the drift runs uncorrected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .echo import MeasurementOutcome, sample_measurement
from .lattice import StandingWaveField
from .rng import substream

__all__ = [
    "CompositeDrift",
    "DriftStep",
    "LinearRamp",
    "LockConfig",
    "LockStats",
    "LockTrace",
    "RandomWalk",
    "error_signal",
    "operating_exposure_time",
    "residual_stats",
    "run_lock",
    "shot_noise_limit",
    "signal_slope",
]

LOCK_LOST_THRESHOLD = math.pi / 2  # error signal is non-monotonic beyond
SATURATION_BAND = 0.45             # |p - setpoint| beyond which the estimate saturates


# --- drift processes ------------------------------------------------------

@dataclass(frozen=True)
class LinearRamp:
    rate: float  # rad/s

    def increment(self, t0, t1, rng):
        return self.rate * (t1 - t0)


@dataclass(frozen=True)
class RandomWalk:
    rate_rms: float  # rad/sqrt(s)

    def increment(self, t0, t1, rng):
        return self.rate_rms * math.sqrt(t1 - t0) * rng.standard_normal()


@dataclass(frozen=True)
class DriftStep:
    size: float  # rad
    at: float    # s

    def increment(self, t0, t1, rng):
        return self.size if t0 < self.at <= t1 else 0.0


@dataclass(frozen=True)
class CompositeDrift:
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ValueError("composite drift needs at least one part")

    def increment(self, t0, t1, rng):
        return sum(p.increment(t0, t1, rng) for p in self.parts)


# --- configuration and results -------------------------------------------

@dataclass(frozen=True)
class LockConfig:
    """Loop parameters.

    ``exposure_time`` of None means "derive from the field": the exposure is
    chosen so a quarter-turn of signal phase accumulates at the operating
    point.  ``noiseless`` switches the readout to its infinite-repetition
    limit (exact probabilities) for deterministic loop diagnostics.
    """

    setpoint: float = 0.5
    update_period: float = 0.5          # s
    repetitions_per_update: int = 200
    gain: float = 1.0
    feedthrough: float = 8e-6           # m/V, position per shift voltage
    dac_step: float = 0.3e-3            # V
    exposure_time: float | None = None  # s
    operating_point: float = math.pi / 4  # kz + phi at the lock position
    duty_cycle: float = 0.5             # fraction of slots that stabilize
    readout_fidelity: float = 1.0
    noiseless: bool = False

    def __post_init__(self):
        if not 0.0 < self.setpoint < 1.0:
            raise ValueError("setpoint must be in (0, 1)")
        if self.gain <= 0 or self.dac_step <= 0 or self.update_period <= 0:
            raise ValueError("gain, dac_step and update_period must be positive")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError("duty cycle must be in (0, 1]")
        if self.repetitions_per_update < 1:
            raise ValueError("repetitions_per_update must be >= 1")


@dataclass(frozen=True)
class LockTrace:
    """Per-slot record of a lock run.

    Residuals are logged at measurement time, i.e. before the slot's
    correction is applied: that is the phase the interleaved science
    experiment actually sees.  ``measured_signal`` is NaN on science slots.
    """

    times: np.ndarray
    true_phase: np.ndarray
    measured_signal: np.ndarray
    applied_voltage: np.ndarray
    residual_phase: np.ndarray
    lock_lost_count: int = 0

    def __post_init__(self):
        n = len(self.times)
        for name in ("true_phase", "measured_signal", "applied_voltage", "residual_phase"):
            if len(getattr(self, name)) != n:
                raise ValueError("trace arrays must have equal length")


@dataclass(frozen=True)
class LockStats:
    rms: float
    max_drift_corrected: float
    lock_lost_count: int


# --- operations ------------------------------------------------------------

def shot_noise_limit(setpoint: float, repetitions: int) -> float:
    """Readout shot-noise floor of the phase estimate, 2*sqrt(S(1-S)/N)."""
    if not 0.0 <= setpoint <= 1.0:
        raise ValueError("setpoint must be in [0, 1]")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    return 2.0 * math.sqrt(setpoint * (1.0 - setpoint) / repetitions)


def operating_exposure_time(field: StandingWaveField, operating_point: float = math.pi / 4,
                            accumulated: float = math.pi / 2) -> float:
    """Exposure that accumulates ``accumulated`` signal phase at the operating point."""
    shift = field.stark_amplitude * math.cos(operating_point)
    if shift <= 0:
        raise ValueError("operating point has no positive light shift")
    return accumulated / shift


def signal_slope(field: StandingWaveField, exposure_time: float,
                 operating_point: float = math.pi / 4) -> float:
    """dS/dphi of the echo signal at the operating point.

    Positive sign convention: an increase of the lattice phase moves the
    operating point toward the node, reduces the accumulated phase below
    quadrature, and raises the signal.
    """
    a = field.stark_amplitude * exposure_time
    return 0.5 * a * math.sin(operating_point) * math.sin(a * math.cos(operating_point))


def error_signal(outcome: MeasurementOutcome, cfg: LockConfig,
                 field: StandingWaveField):
    """Linearized phase-error estimate from one measurement.

    Returns ``(phase_error, saturated)``; ``saturated`` flags signal
    deviations outside the trusted linear band.
    """
    t = cfg.exposure_time if cfg.exposure_time is not None else operating_exposure_time(
        field, cfg.operating_point)
    slope = signal_slope(field, t, cfg.operating_point)
    dev = outcome.p_up_estimate - cfg.setpoint
    return dev / slope, bool(abs(dev) > SATURATION_BAND)


def run_lock(drift, cfg: LockConfig, duration: float, seed: int,
             field: StandingWaveField) -> LockTrace:
    """Simulate the phase lock for ``duration`` seconds.

    Sequential state machine: per slot the drift advances, the residual is
    recorded, and on stabilization slots a measurement is taken and a
    DAC-quantized voltage correction is applied through the position
    feedthrough.  A lock-lost event is recorded whenever the residual at
    measurement time exceeds pi/2 (no re-acquisition logic; the proportional
    loop usually walks back on its own).
    """
    if duration <= cfg.update_period:
        raise ValueError("duration must exceed the update period")
    t_exp = cfg.exposure_time if cfg.exposure_time is not None else operating_exposure_time(
        field, cfg.operating_point)
    slope = signal_slope(field, t_exp, cfg.operating_point)
    kft = field.wavevector * cfg.feedthrough  # rad per volt

    rng_drift = substream(seed, "lock", "drift")
    rng_meas = substream(seed, "lock", "readout")

    n_slots = int(duration / cfg.update_period)
    times = np.empty(n_slots)
    true_phase = np.empty(n_slots)
    signal = np.full(n_slots, np.nan)
    voltage = np.empty(n_slots)
    residual = np.empty(n_slots)

    phi_true = 0.0
    v_total = 0.0
    lock_lost = 0
    stab_count = 0
    for i in range(n_slots):
        t0, t1 = i * cfg.update_period, (i + 1) * cfg.update_period
        phi_true += drift.increment(t0, t1, rng_drift)
        r = phi_true + kft * v_total
        stabilize = int((i + 1) * cfg.duty_cycle) > int(i * cfg.duty_cycle)
        if stabilize:
            stab_count += 1
            u = cfg.operating_point + r
            p = 0.5 * (1.0 + math.cos(field.stark_amplitude * t_exp * math.cos(u)))
            if cfg.noiseless:
                p_hat = p
            else:
                outcome = sample_measurement(p, cfg.repetitions_per_update,
                                             cfg.readout_fidelity, rng_meas)
                p_hat = outcome.p_up_estimate
            signal[i] = p_hat
            if abs(r) > LOCK_LOST_THRESHOLD:
                lock_lost += 1
            err = (p_hat - cfg.setpoint) / slope
            dv = -cfg.gain * err / kft
            dv = round(dv / cfg.dac_step) * cfg.dac_step
            v_total += dv
        times[i] = t1
        true_phase[i] = phi_true
        voltage[i] = v_total
        residual[i] = r
    return LockTrace(times=times, true_phase=true_phase, measured_signal=signal,
                     applied_voltage=voltage, residual_phase=residual,
                     lock_lost_count=lock_lost)


def residual_stats(trace: LockTrace) -> LockStats:
    """RMS residual, total applied correction, and lock-lost count."""
    if len(trace.times) == 0:
        raise ValueError("empty trace")
    rms = float(np.sqrt(np.mean(trace.residual_phase**2)))
    # correction phase is -k*feedthrough*V; report the largest magnitude applied
    corr = trace.true_phase - trace.residual_phase
    return LockStats(rms=rms,
                     max_drift_corrected=float(np.max(np.abs(corr))),
                     lock_lost_count=trace.lock_lost_count)
