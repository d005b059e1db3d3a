"""Wide-range position inference from lattice-phase scans.

A synthetic segmented-trap electrostatic model provides the equilibrium
position versus shift voltage; echo-signal scans of that curve (fine-stepped
windows plus one coarse aliased scan over the full range) are fitted with a
5th-order polynomial position map.  The fit pipeline mirrors how such data
is actually reduced: local window fits give fringe-accurate anchor positions
modulo half a lattice period, integer fringe ambiguities are enumerated, and
a final weighted least squares over all scans refines the coefficients and
reports their covariance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, least_squares

from .echo import echo_signal_thermal, sample_measurement
from .lattice import MotionalState, StandingWaveField
from .rng import child_seed, substream

__all__ = [
    "DiscrepancyCurve",
    "FitConvergenceError",
    "MapFitReport",
    "ModelError",
    "PolynomialMap",
    "ScanPlan",
    "ScanRecord",
    "SegmentPotentialModel",
    "compare_to_electrostatics",
    "equilibrium_curve",
    "equilibrium_derivative",
    "equilibrium_position",
    "fit_polynomial_map",
    "polynomial_from_model",
    "scan_signal",
    "voltage_for_span",
]

DEGREE = 5


class ModelError(RuntimeError):
    """Electrostatic model violated its single-stable-minimum contract."""


class FitConvergenceError(RuntimeError):
    """The nonlinear map fit failed to converge."""


# --- electrostatics ---------------------------------------------------------

@dataclass(frozen=True)
class SegmentPotentialModel:
    """Analytic per-segment axial potentials of a linear segmented trap.

    Each electrode contributes a smooth logistic-difference bump of unit
    amplitude.  The trap segment sits at z=0; the shift pair sits two pitches
    away on either side, with the axis oriented so positive shift voltage
    moves the ion toward +z.  ``width_asymmetry`` widens the +shift electrode
    and ``stray_field`` adds a constant axial field, both of which break the
    odd symmetry of the equilibrium curve (real traps are never symmetric).
    """

    pitch: float = 400e-6
    width: float = 300e-6
    decay: float = 350e-6
    trap_voltage: float = -4.885
    width_asymmetry: float = 0.0
    stray_field: float = 0.0      # V/m
    trap_segment: int = 0
    shift_segments: tuple = (2, -2)
    scan_window: float = 360e-6   # half-width of the root search window

    def __post_init__(self):
        if self.pitch <= 0 or self.width <= 0 or self.decay <= 0:
            raise ValueError("pitch, width and decay must be positive")
        if self.trap_voltage >= 0:
            raise ValueError("trap voltage must be negative (potential well for the ion)")

    def _electrode(self, index: int):
        # +index segments sit at negative z so that +V_s pushes the ion to +z
        center = -index * self.pitch
        width = self.width
        if index == self.shift_segments[0]:
            width = self.width * (1.0 + self.width_asymmetry)
        return center, width

    def unit_potential(self, z, index: int):
        """Axial potential for +1 V on the given segment."""
        c, w = self._electrode(index)
        d = self.decay
        return 0.5 * (np.tanh((z - c + w / 2) / d) - np.tanh((z - c - w / 2) / d))

    def unit_gradient(self, z, index: int):
        c, w = self._electrode(index)
        d = self.decay
        return 0.5 / d * (np.cosh((z - c + w / 2) / d) ** -2
                          - np.cosh((z - c - w / 2) / d) ** -2)

    def unit_curvature(self, z, index: int):
        c, w = self._electrode(index)
        d = self.decay
        s1 = (z - c + w / 2) / d
        s2 = (z - c - w / 2) / d
        return (np.tanh(s2) * np.cosh(s2) ** -2 - np.tanh(s1) * np.cosh(s1) ** -2) / d**2

    def force_balance(self, z, vs: float):
        """Gradient of the total potential per unit charge; zero at equilibrium."""
        p, m = self.shift_segments
        return (vs * (self.unit_gradient(z, p) - self.unit_gradient(z, m))
                + self.trap_voltage * self.unit_gradient(z, self.trap_segment)
                + self.stray_field)

    def force_balance_curvature(self, z, vs: float):
        p, m = self.shift_segments
        return (vs * (self.unit_curvature(z, p) - self.unit_curvature(z, m))
                + self.trap_voltage * self.unit_curvature(z, self.trap_segment))

    @classmethod
    def paper_scale(cls, feedthrough: float = 8e-6, width_asymmetry: float = 0.03,
                    stray_field: float = 2.0) -> "SegmentPotentialModel":
        """Default geometry calibrated to the quoted zero-voltage feedthrough."""
        base = cls(trap_voltage=-1.0, width_asymmetry=width_asymmetry,
                   stray_field=0.0)
        p, m = base.shift_segments
        # calibrate V_t from the symmetric-part response at the origin
        num = -(base.unit_gradient(0.0, p) - base.unit_gradient(0.0, m))
        vt = num / (feedthrough * base.unit_curvature(0.0, base.trap_segment))
        return cls(trap_voltage=float(vt), width_asymmetry=width_asymmetry,
                   stray_field=stray_field)


def _stable_brackets(model: SegmentPotentialModel, vs: float, n_grid: int = 1600):
    w = model.scan_window
    zg = np.linspace(-w, w, n_grid)  # even count: never lands exactly on a root
    f = model.force_balance(zg, vs)
    idx = np.nonzero((f[:-1] < 0.0) & (f[1:] > 0.0))[0]
    return [(zg[i], zg[i + 1]) for i in idx]


def equilibrium_position(model: SegmentPotentialModel, vs: float) -> float:
    """Axial equilibrium position at shift voltage ``vs``.

    Bracketed root of the force balance, resolved to well below 0.01 nm.
    Raises :class:`ModelError` unless exactly one stable minimum exists in
    the scan window.
    """
    brackets = _stable_brackets(model, vs)
    if len(brackets) != 1:
        raise ModelError(
            f"{len(brackets)} stable equilibria at V_s={vs:.4f} V (expected exactly 1)")
    lo, hi = brackets[0]
    z = brentq(lambda x: model.force_balance(x, vs), lo, hi, xtol=1e-13)
    if model.force_balance_curvature(z, vs) <= 0:
        raise ModelError(f"root at V_s={vs:.4f} V is not a stable minimum")
    return float(z)


def equilibrium_curve(model: SegmentPotentialModel, voltages: np.ndarray) -> np.ndarray:
    """Equilibrium positions over a voltage array (each point fully checked)."""
    return np.array([equilibrium_position(model, float(v)) for v in voltages])


def equilibrium_derivative(model: SegmentPotentialModel, vs: float,
                           z: float | None = None) -> float:
    """dz_eq/dV_s from the implicit function theorem."""
    if z is None:
        z = equilibrium_position(model, vs)
    p, m = model.shift_segments
    num = model.unit_gradient(z, p) - model.unit_gradient(z, m)
    den = model.force_balance_curvature(z, vs)
    return float(-num / den)


def voltage_for_span(model: SegmentPotentialModel, span: float = 157e-6,
                     v_max: float = 14.0) -> float:
    """Symmetric voltage amplitude over which the equilibrium spans ``span``."""
    def gap(v):
        return (equilibrium_position(model, v) - equilibrium_position(model, -v)) - span

    # back the search range off the voltage where the single well destabilizes
    hi = v_max
    for v in np.linspace(0.5, v_max, 28):
        try:
            gap(float(v))
        except ModelError:
            hi = float(v) - 0.5
            break
    if gap(hi) < 0:
        raise ModelError(f"model cannot span {span * 1e6:.1f} um while staying stable")
    return float(brentq(gap, 0.1, hi, xtol=1e-6))


# --- polynomial map ----------------------------------------------------------

@dataclass(frozen=True)
class PolynomialMap:
    """Equilibrium position as a 5th-order polynomial of the shift voltage.

    Gauge convention: z(0) = 0, i.e. positions are measured from the
    zero-voltage equilibrium and the constant term vanishes.
    """

    coefficients: tuple  # (c0 .. c5), meters per volt^i

    def __post_init__(self):
        if len(self.coefficients) != DEGREE + 1:
            raise ValueError(f"need exactly {DEGREE + 1} coefficients")

    def __call__(self, v):
        c = self.coefficients
        v = np.asarray(v, dtype=float)
        out = np.full_like(v, c[DEGREE])
        for i in range(DEGREE - 1, -1, -1):
            out = out * v + c[i]
        return out

    def derivative(self, v):
        c = self.coefficients
        v = np.asarray(v, dtype=float)
        out = np.full_like(v, DEGREE * c[DEGREE])
        for i in range(DEGREE - 1, 0, -1):
            out = out * v + i * c[i]
        return out

    def canonical(self) -> "PolynomialMap":
        """Fix the reflection gauge: positive feedthrough at the origin."""
        if self.coefficients[1] < 0:
            return PolynomialMap(tuple(-c for c in self.coefficients))
        return self


def polynomial_from_model(model: SegmentPotentialModel, v_max: float,
                          n_points: int = 201) -> PolynomialMap:
    """Noiseless degree-5 map of the model's (origin-referenced) equilibrium curve."""
    v = np.linspace(-v_max, v_max, n_points)
    z = equilibrium_curve(model, v)
    z -= equilibrium_position(model, 0.0)
    basis = np.stack([v**i for i in range(1, DEGREE + 1)], axis=1)
    c, *_ = np.linalg.lstsq(basis, z, rcond=None)
    return PolynomialMap((0.0, *map(float, c)))


# --- scan generation ---------------------------------------------------------

@dataclass(frozen=True)
class ScanRecord:
    """One voltage scan: estimated signal per point plus the scan metadata."""

    voltages: np.ndarray
    signals: np.ndarray
    repetitions: int
    scan_kind: str          # "resolved" | "aliased"
    step: float

    def __post_init__(self):
        if len(self.voltages) != len(self.signals):
            raise ValueError("voltages and signals must have equal length")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.scan_kind not in ("resolved", "aliased"):
            raise ValueError("scan_kind must be 'resolved' or 'aliased'")


@dataclass(frozen=True)
class ScanPlan:
    """Paper-style scan plan: fine windows plus one aliased full-range scan."""

    v_max: float
    n_windows: int = 5
    window_width: float = 0.1      # V
    resolved_step: float = 1.2e-3  # V
    aliased_step: float = 18e-3    # V
    repetitions: int = 200

    def window_centers(self) -> np.ndarray:
        margin = self.window_width / 2 + 0.05
        return np.linspace(-self.v_max + margin, self.v_max - margin, self.n_windows)

    def window_voltages(self, center: float) -> np.ndarray:
        half = self.window_width / 2
        n = int(round(self.window_width / self.resolved_step))
        return center + (np.arange(n + 1) * self.resolved_step - half)

    def aliased_voltages(self) -> np.ndarray:
        n = int(math.floor(2 * self.v_max / self.aliased_step))
        return -self.v_max + np.arange(n + 1) * self.aliased_step


def scan_signal(position_of, field: StandingWaveField, exposure_time: float,
                voltages: np.ndarray, *, eta: float, motion: MotionalState,
                phase_jitter_rms: float, repetitions: int, readout_fidelity: float,
                seed: int, scan_kind: str, step: float) -> ScanRecord:
    """Simulate one scan: evaluate the echo model at z(V) and sample the readout.

    ``position_of`` maps a voltage array to positions; pass a PolynomialMap,
    or wrap an electrostatic model (see :func:`model_positions`).
    """
    voltages = np.asarray(voltages, dtype=float)
    z = np.asarray(position_of(voltages), dtype=float)
    p = np.clip(echo_signal_thermal(motion, field, z, exposure_time, eta,
                                    phase_jitter_rms), 0.0, 1.0)
    rng = substream(seed, "scan", scan_kind, f"{voltages[0]:.6f}")
    est = np.array([
        sample_measurement(float(pi), repetitions, readout_fidelity, rng).p_up_estimate
        for pi in p
    ])
    return ScanRecord(voltages=voltages, signals=est, repetitions=repetitions,
                      scan_kind=scan_kind, step=step)


def model_positions(model: SegmentPotentialModel):
    """Voltage-to-position callable for a model, referenced to z_eq(0)."""
    z0 = equilibrium_position(model, 0.0)

    def position_of(voltages):
        return equilibrium_curve(model, np.asarray(voltages)) - z0

    return position_of


def generate_scan_set(position_of, field: StandingWaveField, exposure_time: float,
                      plan: ScanPlan, *, eta: float, motion: MotionalState,
                      phase_jitter_rms: float, readout_fidelity: float,
                      seed: int) -> list:
    """All scans of a plan (resolved windows first, aliased last)."""
    records = []
    for c in plan.window_centers():
        records.append(scan_signal(
            position_of, field, exposure_time, plan.window_voltages(c),
            eta=eta, motion=motion, phase_jitter_rms=phase_jitter_rms,
            repetitions=plan.repetitions, readout_fidelity=readout_fidelity,
            seed=child_seed(seed, "window", f"{c:.6f}"), scan_kind="resolved",
            step=plan.resolved_step))
    records.append(scan_signal(
        position_of, field, exposure_time, plan.aliased_voltages(),
        eta=eta, motion=motion, phase_jitter_rms=phase_jitter_rms,
        repetitions=plan.repetitions, readout_fidelity=readout_fidelity,
        seed=child_seed(seed, "aliased"), scan_kind="aliased",
        step=plan.aliased_step))
    return records


# --- fitting -----------------------------------------------------------------

class _SignalInterp:
    """Periodic spline of the echo signal versus total lattice phase u.

    The signal depends on position only through u = k z + phi and has period
    pi in u, so one dense spline evaluates the model (and its derivative)
    for every scan point at negligible cost and ~1e-12 accuracy.
    """

    def __init__(self, field: StandingWaveField, exposure_time: float, eta: float,
                 motion: MotionalState, phase_jitter_rms: float, knots: int = 4096):
        self.period = math.pi
        ug = np.linspace(0.0, self.period, knots + 1)
        ref = StandingWaveField(field.stark_amplitude, 1.0, 0.0)  # u as coordinate
        sg = echo_signal_thermal(motion, ref, ug, exposure_time, eta, phase_jitter_rms)
        sg[-1] = sg[0]
        self._spl = CubicSpline(ug, sg, bc_type="periodic")
        self._dspl = self._spl.derivative()

    def value(self, u):
        return self._spl(np.mod(u, self.period))

    def deriv(self, u):
        return self._dspl(np.mod(u, self.period))


def _binomial_sigma(p_hat: np.ndarray, n: int) -> np.ndarray:
    # plus-one smoothing keeps weights finite at p_hat in {0, 1}
    k = np.round(p_hat * n)
    pt = (k + 1.0) / (n + 2.0)
    return np.sqrt(pt * (1.0 - pt) / n)


def _fit_window(interp: _SignalInterp, k: float, voltages, signals, sigma, center):
    """Local fit of one resolved window: phase anchor, slope and curvature.

    Model u(V) = u0 + k s (V-center) + k q (V-center)^2, with the anchor u0
    folded into [0, pi) and the slope sign fixed positive (mirror gauge).
    """
    x = voltages - center
    y = signals - signals.mean()
    n = len(x)
    spec = np.abs(np.fft.rfft(y * np.hanning(n), n=16 * n))
    freqs = np.fft.rfftfreq(16 * n, x[1] - x[0])
    # dominant spectral line sits at twice the fringe rate (period pi in u)
    s0 = freqs[np.argmax(spec[1:]) + 1] * math.pi / k

    def resid(th):
        return (interp.value(th[0] + k * (th[1] * x + th[2] * x * x)) - signals) / sigma

    best = None
    for u0 in np.linspace(0.0, math.pi, 8, endpoint=False):
        sol = least_squares(resid, [u0, s0, 0.0], method="lm", xtol=1e-13, ftol=1e-13)
        if best is None or sol.cost < best.cost:
            best = sol
    u0, s, q = best.x
    if s < 0:
        u0, s, q = -u0, -s, -q
    return float(u0 % math.pi), float(s), float(q), float(best.cost)


@dataclass(frozen=True)
class MapFitReport:
    coefficients: tuple
    covariance: np.ndarray          # over c1..c5
    rel_uncertainty: tuple
    chi2_dof: float
    n_points: int
    ambiguous_branch: bool
    branch_delta_chi2: float
    window_anchors: tuple
    window_slopes: tuple


def fit_polynomial_map(scans, field: StandingWaveField, exposure_time: float, *,
                       eta: float, motion: MotionalState, phase_jitter_rms: float,
                       initial_guess: PolynomialMap | None = None,
                       max_refine: int = 5) -> tuple:
    """Weighted nonlinear fit of the 5th-order position map to a scan set.

    Needs at least one resolved window (phase anchors) plus the aliased scan.
    Integer half-period ambiguities of the window anchors are enumerated
    around the slope-integrated estimate, ranked by the full-data chi^2 and
    the best few refined with Levenberg-Marquardt (analytic Jacobian in the
    coefficients).  Returns ``(PolynomialMap, MapFitReport)``.
    """
    resolved = [s for s in scans if s.scan_kind == "resolved"]
    aliased = [s for s in scans if s.scan_kind == "aliased"]
    if not resolved or not aliased:
        raise ValueError("need at least one resolved window and the aliased scan")
    k = field.wavevector
    half_period = math.pi / k
    interp = _SignalInterp(field, exposure_time, eta, motion, phase_jitter_rms)

    centers, anchors, slopes = [], [], []
    for rec in resolved:
        center = float(np.mean(rec.voltages))
        sigma = _binomial_sigma(rec.signals, rec.repetitions)
        u0, s, q, _ = _fit_window(interp, k, rec.voltages, rec.signals, sigma, center)
        centers.append(center)
        anchors.append(((u0 - field.phase) % math.pi) / k)  # z mod half period
        slopes.append(s)
    centers = np.array(centers)
    anchors = np.array(anchors)
    slopes = np.array(slopes)

    # slope-integrated curve fixes the integer parts of the anchors
    deg = min(DEGREE - 1, len(centers) - 1)
    dcoef = np.polyfit(centers, slopes, deg)[::-1]  # ascending, dz/dV
    c_boot = np.zeros(DEGREE)
    for i, d in enumerate(dcoef):
        c_boot[i] = d / (i + 1.0)

    def poly_eval(c, v):
        out = np.zeros_like(v)
        for i in range(DEGREE - 1, -1, -1):
            out = out * v + c[i]
        return out * v

    m_hat = np.round((poly_eval(c_boot, centers) - anchors) / half_period).astype(int)
    live = np.abs(centers) > 1e-9  # the V=0 window only re-measures the gauge

    volts = np.concatenate([s.voltages for s in scans])
    sig_hat = np.concatenate([s.signals for s in scans])
    sigma = np.concatenate([_binomial_sigma(s.signals, s.repetitions) for s in scans])
    powers = np.stack([volts**i for i in range(1, DEGREE + 1)], axis=1)

    def residual(c):
        u = k * (powers @ c) + field.phase
        return (interp.value(u) - sig_hat) / sigma

    def jacobian(c):
        u = k * (powers @ c) + field.phase
        return (interp.deriv(u) * k)[:, None] * powers / sigma[:, None]

    def chi2(c):
        r = residual(c)
        return float(r @ r)

    # candidate coefficient sets from anchor assignments (weighted linear solve
    # over anchors + slopes), ranked by full-data chi^2
    anchor_rows = np.stack([centers[live]**i for i in range(1, DEGREE + 1)], axis=1) / 1e-9
    slope_rows = np.stack([i * centers**(i - 1) for i in range(1, DEGREE + 1)],
                          axis=1) / 8e-9
    candidates = []
    for dm in itertools.product((-1, 0, 1), repeat=int(live.sum())):
        m = m_hat.astype(float).copy()
        m[live] += np.array(dm)
        z_anchor = anchors + m * half_period
        a_mat = np.vstack([anchor_rows, slope_rows])
        b_vec = np.concatenate([z_anchor[live] / 1e-9, slopes / 8e-9])
        c_cand, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
        candidates.append((chi2(c_cand), tuple(c_cand)))
    if initial_guess is not None:
        c_init = np.array(initial_guess.coefficients[1:])
        candidates.append((chi2(c_init), tuple(c_init)))
    candidates.sort(key=lambda t: t[0])

    refined = []
    for _, start in candidates[:max_refine]:
        sol = least_squares(residual, np.array(start), jac=jacobian, method="lm",
                            xtol=1e-14, ftol=1e-14, max_nfev=400)
        refined.append(sol)
    refined.sort(key=lambda s: s.cost)
    best = refined[0]
    if best.status <= 0:
        raise FitConvergenceError("map fit did not converge")

    # a second refined optimum of comparable quality means the alias branch
    # is not determined by the data
    v_probe = aliased[0].voltages
    pow_probe = np.stack([v_probe**i for i in range(1, DEGREE + 1)], axis=1)
    delta = math.inf
    for sol in refined[1:]:
        if np.max(np.abs(pow_probe @ (sol.x - best.x))) > half_period / 4:
            delta = 2 * (sol.cost - best.cost)
            break
    ambiguous = delta < 1.0

    jac = jacobian(best.x)
    cov = np.linalg.inv(jac.T @ jac)
    coeffs = (0.0, *map(float, best.x))
    rel = tuple(
        float(np.sqrt(cov[i, i]) / abs(best.x[i])) if best.x[i] != 0 else math.inf
        for i in range(DEGREE))
    n_pts = len(volts)
    report = MapFitReport(
        coefficients=coeffs, covariance=cov, rel_uncertainty=rel,
        chi2_dof=2 * best.cost / max(n_pts - DEGREE, 1), n_points=n_pts,
        ambiguous_branch=bool(ambiguous), branch_delta_chi2=float(delta),
        window_anchors=tuple(map(float, anchors)),
        window_slopes=tuple(map(float, slopes)))
    return PolynomialMap(coeffs).canonical(), report


# --- comparison to electrostatics -------------------------------------------

@dataclass(frozen=True)
class DiscrepancyCurve:
    voltages: np.ndarray
    map_slope_periods: np.ndarray    # z'_map(V) / lattice period
    model_slope_periods: np.ndarray  # z'_model(V) / lattice period
    relative_deviation: np.ndarray


def compare_to_electrostatics(pmap: PolynomialMap, model: SegmentPotentialModel,
                              voltages: np.ndarray, lattice_period_m: float
                              ) -> DiscrepancyCurve:
    """Fringe-rate comparison between a fitted map and the electrostatic model."""
    voltages = np.asarray(voltages, dtype=float)
    dmap = pmap.derivative(voltages) / lattice_period_m
    dmodel = np.array([equilibrium_derivative(model, float(v)) for v in voltages])
    dmodel /= lattice_period_m
    return DiscrepancyCurve(
        voltages=voltages, map_slope_periods=dmap, model_slope_periods=dmodel,
        relative_deviation=(dmap - dmodel) / dmodel)
