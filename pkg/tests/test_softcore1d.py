import math

import numpy as np
import pytest

from adiabatic_piston.averaged import hard1d_speed_rhs
from adiabatic_piston.core import MassProfile, NumericalError, SlowState
from adiabatic_piston.hardcore1d import FullState1D, simulate_hard_1d
from adiabatic_piston.softcore1d import (CubicKernel, QuarticKernel, SoftFullState, get_kernel, integrate_soft,
                                         layer_time_integral, particle_energy, period_quadrature, phase_integral,
                                         sample_soft_state, soft_averaged_rhs, soft_rhs, turning_point)


class TestKernels:
    @pytest.mark.parametrize("kernel", [CubicKernel(), QuarticKernel()])
    def test_cutoff_and_monotone(self, kernel):
        assert kernel.value(1.0) == 0.0 and kernel.value(1.7) == 0.0
        xs = np.linspace(-0.5, 0.999, 200)
        assert all(kernel.d1(x) < 0 for x in xs)

    @pytest.mark.parametrize("kernel", [CubicKernel(), QuarticKernel()])
    def test_c2_at_cutoff(self, kernel):
        h = 1e-9
        for f in (kernel.value, kernel.d1, kernel.d2):
            assert abs(f(1.0 - h) - f(1.0 + h)) < 1e-8

    @pytest.mark.parametrize("kernel", [CubicKernel(), QuarticKernel()])
    def test_inverse(self, kernel):
        for y in (1e-6, 0.1, 0.5, 0.9, 1.0):
            assert kernel.value(kernel.inverse(y)) == pytest.approx(y, rel=1e-12)
        assert kernel.inverse(0.0) == 1.0 and kernel.inverse(kernel.height) == 0.0

    def test_scaled_derivative(self):
        # d/dx (1 - x/delta)^3 at x = 0.05, delta = 0.1
        delta, x = 0.1, 0.05
        assert CubicKernel().d1(x / delta) / delta == pytest.approx(-7.5, rel=1e-15)

    def test_unknown(self):
        with pytest.raises(ValueError):
            get_kernel("gauss")


def _state(left, right, Q=0.5, W=0.0, eps=0.01, delta=0.1):
    return SoftFullState(Q, W, left, right, eps, delta)


class TestSoftRHS:
    def test_free_flight(self):
        st = _state([(0.25, 0.7, 1.0)], [(0.8, -0.3, 1.0)], W=0.4)
        d = soft_rhs(st)
        assert d[1] == 0.0 and d[4] == 0.0 and d[5] == 0.0
        assert d[0] == pytest.approx(0.01 * 0.4)
        assert list(d[2:4]) == [0.7, -0.3]

    def test_symmetric(self):
        st = _state([(0.4375, 0.2, 1.0)], [(0.5625, -0.2, 1.0)])
        assert soft_rhs(st)[1] == 0.0

    def test_piston_force_value(self):
        st = _state([(0.45, 0.5, 1.0)], [(0.8, 0.1, 1.0)], eps=0.01)
        d = soft_rhs(st)
        assert d[1] == pytest.approx(0.01 * 7.5, rel=1e-12)
        assert d[4] == pytest.approx(-7.5, rel=1e-12)

    def test_energy_definitions(self):
        st = _state([(0.25, 0.6, 2.0)], [(0.97, 0.0, 1.0)])
        assert particle_energy(st, 1, 0) == pytest.approx(0.5 * 2.0 * 0.36)
        # a particle at rest at its turning point has energy kappa_delta(a)
        assert particle_energy(st, 2, 0) == pytest.approx(CubicKernel().value(0.03 / 0.1))


class TestTurningPoint:
    def test_limits(self):
        assert turning_point(1.0 - 1e-15, 0.1) < 1e-5
        assert turning_point(1e-15, 0.1) == pytest.approx(0.1, rel=1e-4)

    def test_range(self):
        for E in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                turning_point(E, 0.1)


class TestPeriod:
    def test_hard_limit_formula(self):
        assert period_quadrature(1.0, 1.0, 0.0, m=2.0) == pytest.approx(2.0, rel=1e-15)
        assert period_quadrature(0.3, 0.5, 0.0, side=2) == pytest.approx(math.sqrt(4.0) * 0.7)

    def test_order_delta(self):
        Q, E, m = 0.4, 0.5, 1.0
        hard = math.sqrt(2 * m / E) * Q
        d1 = period_quadrature(Q, E, 0.02, m) - hard
        d2 = period_quadrature(Q, E, 0.01, m) - hard
        assert d1 / d2 == pytest.approx(2.0, rel=0.2)

    def test_closed_form_matches_quadrature(self):
        for E in (0.01, 0.3, 0.9):
            a = period_quadrature(0.4, E, 0.05, method="quad")
            b = period_quadrature(0.4, E, 0.05, method="auto")
            assert a == pytest.approx(b, rel=1e-10)
            a = phase_integral(0.4, E, 0.05, method="quad")
            b = phase_integral(0.4, E, 0.05, method="auto")
            assert a == pytest.approx(b, rel=1e-10)

    def test_quartic_layer_time_positive(self):
        assert layer_time_integral(0.3, "quartic") > 0

    def test_c1_smooth(self):
        def fd(h, Q, E, which):
            if which == "Q":
                return (period_quadrature(Q + h, E, 0.05) - period_quadrature(Q - h, E, 0.05)) / (2 * h)
            return (period_quadrature(Q, E + h, 0.05) - period_quadrature(Q, E - h, 0.05)) / (2 * h)
        for which in ("Q", "E"):
            a, b = fd(1e-3, 0.4, 0.5, which), fd(1e-4, 0.4, 0.5, which)
            assert a == pytest.approx(b, rel=0.01)

    def test_energy_range(self):
        with pytest.raises(ValueError):
            period_quadrature(0.4, 1.2, 0.05)


class TestPhaseIntegral:
    def test_hard_rectangle(self):
        assert phase_integral(0.3, 0.5, 0.0) == pytest.approx(2 * 0.3 * 1.0)

    def test_increasing_in_energy(self):
        vals = [phase_integral(0.4, E, 0.05) for E in np.linspace(0.05, 0.95, 10)]
        assert np.all(np.diff(vals) > 0)


class TestSoftAveraged:
    def test_hard_limit(self):
        h = SlowState(0.3, 0.4, (0.5, 0.2), (0.3,))
        s1 = tuple(math.sqrt(2 * e) for e in h.left)
        s2 = tuple(math.sqrt(2 * e) for e in h.right)
        soft = soft_averaged_rhs(h, 0.0)
        # dW = sum m s^2 / Q - ...
        assert soft[1] == pytest.approx(hard1d_speed_rhs(h.Q, h.W, s1, s2)[1], rel=1e-14)
        assert soft[1] == pytest.approx(sum(2 * e / 0.3 for e in h.left) - 2 * 0.3 / 0.7, rel=1e-14)

    def test_example_value(self):
        h = SlowState(0.25, 0.0, (0.5,), (0.5,))
        assert soft_averaged_rhs(h, 0.0)[1] == pytest.approx(8.0 / 3.0, rel=1e-15)

    def test_mirror(self):
        h = SlowState(0.5, 0.0, (0.4,), (0.4,))
        assert soft_averaged_rhs(h, 0.05)[1] == 0.0

    def test_converges_order_delta(self):
        h = SlowState(0.35, 0.3, (0.5,), (0.4,))
        base = soft_averaged_rhs(h, 0.0)
        e1 = np.max(np.abs(soft_averaged_rhs(h, 0.02) - base))
        e2 = np.max(np.abs(soft_averaged_rhs(h, 0.01) - base))
        assert 1.6 <= e1 / e2 <= 2.4


class TestIntegrateSoft:
    def test_energy_drift_short(self):
        rng = np.random.default_rng(1)
        st = sample_soft_state(SlowState(0.4, 0.0, (0.3, 0.1), (0.2,)), MassProfile(100.0, (1, 1), (1,)), 0.05,
                               rng=rng)
        tr = integrate_soft(st, 100.0, 1.0)
        assert tr.meta["energy_drift"] < 1e-9
        assert np.allclose(tr.extra["H"], tr.extra["H"][0], rtol=1e-9)

    def test_hard_core_limit(self):
        # post-interaction speed against the hard-core collision law at small delta
        M = 100.0
        eps = 0.1
        soft = SoftFullState(0.5, 0.0, [(0.3, 1.0, 1.0)], [(0.8, 0.05, 1.0)], eps, 1e-3)
        hard = FullState1D.single(0.5, 0.0, M, [(0.3, 1.0)], [(0.8, 0.05)])
        ts = integrate_soft(soft, 0.4, 0.4).meta["final_state"]
        th = simulate_hard_1d(hard, 0.4, 0.4).meta["final_state"]
        assert ts.left[0][1] == pytest.approx(th.chambers[0][0].v, abs=1e-2)
        assert ts.W * eps == pytest.approx(th.pistons[0].V, abs=1e-2)

    def test_step_too_large(self):
        st = SoftFullState(0.5, 0.0, [(0.3, 1.0, 1.0)], [(0.7, -1.0, 1.0)], 0.1, 0.05)
        with pytest.raises(NumericalError):
            integrate_soft(st, 5.0, 0.5, step=0.02, tol=1e-12)

    def test_sampler_respects_layers(self):
        rng = np.random.default_rng(4)
        h0 = SlowState(0.4, 0.0, (0.3,) * 3, (0.2,) * 2)
        st = sample_soft_state(h0, MassProfile(1e4, (1,) * 3, (1,) * 2), 0.05, rng=rng)
        assert all(0.05 <= q <= 0.35 for q, _, _ in st.left)
        assert all(0.45 <= q <= 0.95 for q, _, _ in st.right)
        e1, e2 = st.energies()
        assert np.allclose(e1 + e2, h0.left + h0.right)

    def test_state_validation(self):
        with pytest.raises(ValueError):
            SoftFullState(0.5, 0.0, [(0.6, 1.0, 1.0)], [], 0.1, 0.05)
        with pytest.raises(ValueError):
            SoftFullState(0.5, 0.0, [], [], 0.1, 0.0)
