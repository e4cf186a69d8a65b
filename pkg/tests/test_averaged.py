import math

import numpy as np
import pytest

from adiabatic_piston.averaged import (AveragedSystem, averaged_rhs, closed_form_energies, detect_period,
                                       effective_hamiltonian, equilibrium_state, hard1d_speed_rhs,
                                       integrate_averaged, integrate_npiston, npiston_rhs)
from adiabatic_piston.core import NPistonState, SlowState, Window

HARD = AveragedSystem("hard1d")


def _random_states(n, seed, n1=2, n2=1):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield SlowState(rng.uniform(0.1, 0.9), rng.uniform(-2, 2), tuple(rng.uniform(0.01, 2, n1)),
                        tuple(rng.uniform(0.01, 2, n2)))


class TestAveragedRHS:
    def test_example_value(self):
        h = SlowState(0.25, 0.0, (0.5,), (0.5,))
        assert averaged_rhs(HARD, h)[1] == pytest.approx(8.0 / 3.0, rel=1e-15)

    def test_equal_pressures(self):
        h = equilibrium_state(0.3, 0.6, n1=2, n2=3)
        assert averaged_rhs(HARD, h)[1] == pytest.approx(0.0, abs=1e-15)

    def test_ddim_symmetric(self):
        sysd = AveragedSystem("ddim", d=2, A1=0.0, A2=0.0, ell=1.0)
        h = SlowState(0.5, 0.0, (1.0,), (1.0,), dim=2)
        assert averaged_rhs(sysd, h)[1] == 0.0

    def test_ddim_formula(self):
        sysd = AveragedSystem("ddim", d=3, A1=0.2, A2=0.1, ell=0.5)
        h = SlowState(0.4, 0.7, (0.3, 0.2), (0.6,), dim=3)
        a1, a2 = 0.2 + 0.5 * 0.4, 0.1 + 0.5 * 0.6
        f = averaged_rhs(sysd, h)
        assert f[1] == pytest.approx(2 * 0.5 * 0.5 / (3 * a1) - 2 * 0.6 * 0.5 / (3 * a2))
        assert f[2] == pytest.approx(-2 * 0.7 * 0.3 * 0.5 / (3 * a1))
        assert f[4] == pytest.approx(2 * 0.7 * 0.6 * 0.5 / (3 * a2))

    def test_collapsed_chamber(self):
        with pytest.raises(ValueError):
            averaged_rhs(HARD, SlowState(0.0, 0.0, (0.5,), (0.5,)))
        with pytest.raises(ValueError):
            averaged_rhs(HARD, SlowState(1.0, 0.0, (0.5,), (0.5,)))

    def test_speed_coordinates(self):
        # 1D with unit masses: ds/dtau = -s W / Q; and E = s^2/2 gives dE = s ds
        f = hard1d_speed_rhs(0.25, 0.5, [1.0], [1.0])
        assert f[1] == pytest.approx(8.0 / 3.0)
        assert f[2][0] == pytest.approx(-2.0)

    def test_rectangle_d1_matches_hard(self):
        sysd = AveragedSystem.rectangle(d=1)
        for h in _random_states(100, 0):
            a = averaged_rhs(HARD, h)
            b = averaged_rhs(sysd, h)
            assert np.max(np.abs(a - b)) <= 4 * np.finfo(float).eps * np.max(np.abs(a))

    def test_invalid_system(self):
        with pytest.raises(ValueError):
            AveragedSystem("quantum")
        with pytest.raises(ValueError):
            AveragedSystem("ddim", d=4)
        with pytest.raises(ValueError):
            AveragedSystem("npiston")


class TestEffectiveHamiltonian:
    def test_at_initial_state(self):
        h0 = SlowState(0.3, 0.4, (0.5, 0.2), (0.1,))
        assert effective_hamiltonian(HARD, h0, h0) == pytest.approx(0.08 + 0.8, rel=1e-15)

    def test_explicit_form(self):
        h0 = SlowState(0.3, 0.4, (0.5,), (0.1,))
        h = SlowState(0.45, -0.2, (0.0,), (0.0,))
        expected = 0.02 + 0.5 * 0.3 ** 2 / 0.45 ** 2 + 0.1 * 0.7 ** 2 / 0.55 ** 2
        assert effective_hamiltonian(HARD, h, h0) == pytest.approx(expected, rel=1e-14)

    def test_ddim_d1_rectangle_coincides(self):
        sysd = AveragedSystem.rectangle(d=1)
        states = list(_random_states(10, 7))
        for h0, h in zip(states[:5], states[5:]):
            assert effective_hamiltonian(HARD, h, h0) == pytest.approx(effective_hamiltonian(sysd, h, h0),
                                                                       rel=1e-14)


class TestClosedFormEnergies:
    def test_unchanged_at_initial(self):
        h0 = SlowState(0.3, 0.4, (0.5,), (0.1,))
        e1, e2 = closed_form_energies(HARD, h0, 0.3)
        assert e1 == (0.5,) and e2 == pytest.approx((0.1,))

    def test_d2_area_doubles(self):
        sysd = AveragedSystem("ddim", d=2, A1=0.2, A2=0.2, ell=1.0)
        h0 = SlowState(0.1, 0.0, (0.8,), (0.3,), dim=2)
        # |D1| goes from 0.3 to 0.6
        e1, _ = closed_form_energies(sysd, h0, 0.4)
        assert e1[0] == pytest.approx(0.4, rel=1e-14)

    def test_d1_q_halves(self):
        h0 = SlowState(0.6, 0.0, (0.5,), (0.3,))
        e1, _ = closed_form_energies(HARD, h0, 0.3)
        assert math.sqrt(2 * e1[0]) == pytest.approx(2.0, rel=1e-14)


class TestIntegrate:
    def test_equilibrium_is_fixed(self):
        h0 = equilibrium_state(0.35, 0.7)
        tr = integrate_averaged(HARD, h0, 2.0, step=1e-3)
        assert np.max(np.abs(tr.data - tr.data[0])) < 1e-12

    def test_period_stable_and_returns(self):
        h0 = SlowState(0.3, 0.0, (0.5,), (0.5,))
        tr = integrate_averaged(HARD, h0, 10.0, step=1e-4)
        P = detect_period(tr)
        assert len(P) >= 2
        assert abs(P[-1] - P[-2]) < 1e-4
        # returns near h0 after a whole number of periods
        y = tr.meta["dense"](P[0] * 3)[0]
        assert np.max(np.abs(y - h0.as_array())) < 1e-4

    def test_adiabatic_law_and_heff(self):
        h0 = SlowState(0.3, 0.2, (0.5, 0.1), (0.4,))
        tr = integrate_averaged(HARD, h0, 3.0, step=1e-4)
        Q = tr.column("Q")
        s = np.sqrt(2 * tr.column("E1_1"))
        assert np.max(np.abs(s * Q / (s[0] * Q[0]) - 1)) < 1e-6
        H = tr.extra["Heff"]
        assert np.max(np.abs(H / H[0] - 1)) < 1e-8

    def test_window_stop(self):
        h0 = SlowState(0.5, -3.0, (0.5,), (0.5,))
        tr = integrate_averaged(HARD, h0, 2.0, step=1e-3, window=Window(0.3, 0.7, 10.0, 1e-3, 100.0))
        T = tr.meta["stopping_time"]
        assert 0 < T < 2.0
        assert tr.tau[-1] == pytest.approx(T)

    def test_dense_output_accuracy(self):
        h0 = SlowState(0.3, 0.2, (0.5,), (0.4,))
        coarse = integrate_averaged(HARD, h0, 1.0, step=1e-2)
        fine = integrate_averaged(HARD, h0, 1.0, step=1e-4)
        t = np.linspace(0.013, 0.987, 50)
        assert np.max(np.abs(coarse.meta["dense"](t) - fine.interpolate(t))) < 1e-5


class TestNPiston:
    def test_single_piston_reduction(self):
        sysn = AveragedSystem("npiston", piston_masses=(1.0,))
        for h in _random_states(20, 3):
            st = NPistonState((h.Q,), (h.W,), (h.left, h.right))
            a, b = npiston_rhs(sysn, st), averaged_rhs(HARD, h)
            assert np.max(np.abs(a - b)) <= 1e-14 * np.max(np.abs(b))

    def test_equilibrium(self):
        sysn = AveragedSystem("npiston", piston_masses=(1.0, 2.0))
        st = NPistonState((0.2, 0.5), (0.0, 0.0), ((0.2,), (0.3,), (0.5,)))
        f = npiston_rhs(sysn, st)
        assert np.allclose(f[2:4], 0.0, atol=1e-14)

    def test_collapse(self):
        with pytest.raises(ValueError):
            NPistonState((0.5, 0.5), (0.0, 0.0), ((0.2,), (0.3,), (0.5,)))

    def test_heff_conserved(self):
        sysn = AveragedSystem("npiston", piston_masses=(1.0, 0.5))
        st = NPistonState((0.3, 0.6), (0.2, -0.1), ((0.5,), (0.4, 0.1), (0.5,)))
        tr = integrate_npiston(sysn, st, 3.0, step=1e-4)
        H = tr.extra["Heff"]
        assert np.max(np.abs(H / H[0] - 1)) <= 1e-8
