import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticelock.lattice import (
    IonState,
    MotionalState,
    PhysicalParams,
    StandingWaveField,
    beam_angle_for_period,
    lamb_dicke_element,
    lattice_period,
    min_truncation,
    stark_shift,
    thermal_tail_mass,
    thermal_weights,
)


def brute_force_cosine_diagonal(n, eta, cutoff=None):
    """Independent oracle: diagonal of cos(eta (a+a^dag)) in a truncated basis."""
    if cutoff is None:
        cutoff = n + 40
    dim = cutoff + 1
    x = np.diag(np.sqrt(np.arange(1, dim)), 1) + np.diag(np.sqrt(np.arange(1, dim)), -1)
    w, v = np.linalg.eigh(eta * x)
    cos_m = (v * np.cos(w)) @ v.T
    return cos_m[n, n]


class TestLatticePeriod:
    def test_counterpropagating(self):
        p = PhysicalParams(beam_angle=math.pi)
        assert lattice_period(p) == pytest.approx(397e-9 / 2)
        assert lattice_period(p) == pytest.approx(198.5e-9)

    def test_small_angle_rejected(self):
        p = PhysicalParams()
        object.__setattr__(p, "beam_angle", 1e-7)
        with pytest.raises(ValueError):
            lattice_period(p)
        with pytest.raises(ValueError):
            PhysicalParams(beam_angle=1e-7)

    def test_default_geometry_from_position_jitter(self):
        # invert the quoted 2.5%-of-period = 6.5 nm jitter: period = 260 nm,
        # which at 397 nm requires ~99.5 deg between the beams
        period = 6.5e-9 / 0.025
        assert period == pytest.approx(260e-9)
        angle = beam_angle_for_period(397e-9, period)
        assert math.degrees(angle) == pytest.approx(99.5, abs=0.1)
        p = PhysicalParams()
        assert lattice_period(p) == pytest.approx(260e-9, rel=1e-12)


class TestStarkShift:
    def test_antinode(self):
        f = StandingWaveField(stark_amplitude=2.0, wavevector=1.0, phase=0.0)
        assert stark_shift(f, 0.0) == pytest.approx(2.0)

    def test_node(self):
        f = StandingWaveField(stark_amplitude=2.0, wavevector=1.0, phase=0.0)
        assert stark_shift(f, math.pi / 2) == pytest.approx(0.0, abs=1e-15)

    def test_midpoint_against_field_superposition_oracle(self):
        # two-beam interference oracle: superpose two unit-amplitude plane
        # waves polarized along x and y; the circular-polarization intensity
        # imbalance carries the differential shift profile cos(2kz') = cos(kz)
        k_beam = 2 * math.pi / 397e-9
        alpha = beam_angle_for_period(397e-9, 260e-9)
        kz = k_beam * math.sin(alpha / 2)  # axial wavevector component per beam
        z = np.linspace(0.0, 5e-7, 1201)
        ex = np.exp(1j * kz * z)        # beam 1, x-polarized
        ey = np.exp(-1j * kz * z)       # beam 2, y-polarized (counter axial comp.)
        e_plus = (ex + 1j * ey) / math.sqrt(2)
        e_minus = (ex - 1j * ey) / math.sqrt(2)
        imbalance = (np.abs(e_plus) ** 2 - np.abs(e_minus) ** 2) / 2.0
        f = StandingWaveField(stark_amplitude=1.0, wavevector=2 * kz, phase=math.pi / 2)
        # oracle gives sin(2 kz z) = cos(2 kz z - pi/2); field phase absorbs that
        assert np.allclose(stark_shift(f, z), -imbalance, atol=1e-12)
        g = StandingWaveField(stark_amplitude=1.0, wavevector=2 * kz, phase=0.0)
        probe = math.pi / 4 / (2 * kz)
        assert stark_shift(g, probe) == pytest.approx(1 / math.sqrt(2))

    def test_periodicity(self):
        p = PhysicalParams()
        f = StandingWaveField.from_params(p, 1.5e6, phase=0.3)
        z = np.linspace(-1e-6, 1e-6, 101)
        period = lattice_period(p)
        a = stark_shift(f, z)
        b = stark_shift(f, z + period)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * f.stark_amplitude)

    def test_phase_not_wrapped(self):
        f = StandingWaveField(stark_amplitude=1.0, wavevector=1.0, phase=3 * math.pi)
        assert f.phase == pytest.approx(3 * math.pi)


class TestLambDickeElement:
    def test_eta_zero_is_identity(self):
        for n in (0, 1, 5, 40):
            assert lamb_dicke_element(n, 0.0) == pytest.approx(1.0)

    def test_ground_state_value(self):
        # frozen from the brute-force oracle below
        assert lamb_dicke_element(0, 0.21) == pytest.approx(0.9782, abs=1e-4)
        assert lamb_dicke_element(0, 0.21) == pytest.approx(
            brute_force_cosine_diagonal(0, 0.21), rel=1e-12)

    def test_first_excited_value(self):
        assert lamb_dicke_element(1, 0.21) == pytest.approx(0.9350, abs=1e-4)
        assert lamb_dicke_element(1, 0.21) == pytest.approx(
            brute_force_cosine_diagonal(1, 0.21), rel=1e-12)

    @pytest.mark.parametrize("eta", [0.05, 0.1, 0.21, 0.35, 0.5])
    def test_against_brute_force_oracle(self, eta):
        for n in range(0, 51):
            ref = brute_force_cosine_diagonal(n, eta)
            assert lamb_dicke_element(n, eta) == pytest.approx(ref, rel=1e-8)

    def test_bounded_and_monotone_ground_state(self):
        etas = np.linspace(0.0, 0.99, 200)
        m0 = lamb_dicke_element(0, 0.0)
        for eta in etas[1:]:
            m = lamb_dicke_element(0, float(eta))
            assert -1.0 <= m <= 1.0
            assert m < m0
            m0 = m

    @given(n=st.integers(min_value=0, max_value=80),
           eta=st.floats(min_value=0.0, max_value=0.95))
    @settings(max_examples=200, deadline=None)
    def test_bounded_everywhere(self, n, eta):
        assert -1.0 <= lamb_dicke_element(n, eta) <= 1.0


class TestThermalWeights:
    def test_ground_state(self):
        w = thermal_weights(0.0, 10)
        assert w[0] == 1.0
        assert np.all(w[1:] == 0.0)

    def test_nbar_one_closed_form(self):
        w = thermal_weights(1.0, 20)
        n = np.arange(21)
        assert np.allclose(w, 0.5 ** (n + 1), rtol=1e-12)
        assert w[0] == pytest.approx(0.5)

    def test_tail_mass_exact(self):
        for nbar in (0.3, 1.0, 5.0, 28.0):
            for t in (3, 17, 101):
                w = thermal_weights(nbar, t)
                assert 1.0 - w.sum() == pytest.approx(thermal_tail_mass(nbar, t), rel=1e-9)

    def test_truncation_for_hot_ion(self):
        # solve (nbar/(nbar+1))**(T+1) < 1e-3 at nbar=28
        t = min_truncation(28.0, 1e-3)
        assert t >= 193
        assert t == 196
        assert thermal_tail_mass(28.0, t) < 1e-3
        assert thermal_tail_mass(28.0, t - 1) >= 1e-3

    @given(nbar=st.floats(min_value=1e-3, max_value=50.0),
           t=st.integers(min_value=0, max_value=400))
    @settings(max_examples=200, deadline=None)
    def test_partial_sums_converge(self, nbar, t):
        w = thermal_weights(nbar, t)
        assert w.sum() <= 1.0 + 1e-12
        assert 1.0 - w.sum() == pytest.approx(thermal_tail_mass(nbar, t), abs=1e-10)


class TestMotionalState:
    def test_thermal_truncation_auto_raised(self):
        m = MotionalState.thermal(28.0, truncation=50)
        assert m.truncation == 196
        assert m.weights().sum() >= 0.999

    def test_default_truncation_kept_when_sufficient(self):
        m = MotionalState.thermal(0.4)
        assert m.truncation == 200

    def test_fock_state_weights(self):
        m = MotionalState.fock(3)
        w = m.weights()
        assert w[3] == 1.0 and w.sum() == 1.0

    def test_spin_validation(self):
        with pytest.raises(ValueError):
            IonState(spin_mj=1.0)
        ion = IonState(spin_mj=-0.5, position=1e-9)
        assert ion.spin_mj == -0.5
