import io
import math

import numpy as np
import pytest

from adiabatic_piston.averaged import AveragedSystem, integrate_averaged
from adiabatic_piston.billiard2d import FullState2D, Particle2D
from adiabatic_piston.core import (MassProfile, SlowState, Trajectory, Window, read_csv, slow_projection,
                                   stopping_time, sup_deviation, write_csv)
from adiabatic_piston.hardcore1d import FullState1D


def _traj(tau, rows, counts=(1, 1)):
    return Trajectory(np.asarray(tau, float), np.asarray(rows, float), counts)


def test_slow_projection_hard_1d():
    st = FullState1D.single(0.5, 0.0, 1e4, [(0.2, 1.0)], [(0.7, -1.0)])
    h = slow_projection(st)
    assert (h.Q, h.W, h.left, h.right) == (0.5, 0.0, (0.5,), (0.5,))


def test_rescaled_velocity_definition():
    st = FullState1D.single(0.5, 0.01, 1e4, [(0.2, 1.0)], [(0.7, -1.0)])
    assert slow_projection(st).W == pytest.approx(1.0, rel=1e-14)


def test_slow_projection_2d_energy():
    st = FullState2D(0.5, 0.0, 1e4, [Particle2D(0.2, 0.3, 0.6, 0.8, 1), Particle2D(0.7, 0.3, 1.0, 0.0, 2)])
    h = slow_projection(st)
    assert h.left[0] == pytest.approx(0.5, abs=1e-15)
    assert h.dim == 2


def test_slow_state_validation():
    with pytest.raises(ValueError):
        SlowState(1.5, 0.0, (0.5,), (0.5,))
    with pytest.raises(ValueError):
        SlowState(0.5, 0.0, (-0.1,), (0.5,))
    with pytest.raises(ValueError):
        MassProfile(0.0)


def test_mass_profile_eps():
    assert MassProfile(1e4).eps == pytest.approx(0.01)
    assert MassProfile.from_eps(0.0).M == math.inf
    assert MassProfile(math.inf).eps == 0.0


def test_window_validation():
    with pytest.raises(ValueError):
        Window(0.5, 0.4, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        Window(0.1, 0.9, 1.0, 0.0, 1.0)


class TestStoppingTime:
    win = Window(0.2, 0.8, 10.0, 1e-3, 10.0)

    def test_inside(self):
        tr = _traj([0, 0.5, 1.0], [[0.5, 0, 0.5, 0.5]] * 3)
        assert stopping_time(tr, self.win) == math.inf

    def test_first_exit(self):
        tau = np.round(np.arange(0, 1.0001, 0.1), 12)
        rows = [[0.5 if t < 0.3 else 0.1, 0, 0.5, 0.5] for t in tau]
        assert stopping_time(_traj(tau, rows), self.win) == pytest.approx(0.3)

    def test_empty(self):
        with pytest.raises(ValueError):
            stopping_time(_traj(np.zeros(0), np.zeros((0, 4))), self.win)

    def test_averaged_orbit_crossing(self):
        # left pressure dominates so Q rises; a lower wall bound of Q is crossed on the way back
        h0 = SlowState(0.3, -1.2, (0.5,), (0.5,))
        av = integrate_averaged(AveragedSystem("hard1d"), h0, 1.0, step=1e-4)
        Q = av.column("Q")
        k = int(np.argmax(Q < 0.2))
        assert k > 0
        T = stopping_time(av, Window(0.2, 0.95, 10.0, 1e-3, 100.0))
        assert T == pytest.approx(av.tau[k])


class TestSupDeviation:
    def test_identical(self):
        tr = _traj([0, 1], [[0.5, 0, 0.5, 0.5], [0.6, 1, 0.4, 0.5]])
        assert sup_deviation(tr, tr, 1.0) == 0.0

    def test_constant_offset_in_w(self):
        a = _traj([0, 0.5, 1], [[0.5, 0, 0.5, 0.5]] * 3)
        b = _traj([0, 0.5, 1], [[0.5, 0.01, 0.5, 0.5]] * 3)
        assert sup_deviation(a, b, 1.0) == pytest.approx(0.01)

    def test_mismatched_counts(self):
        a = _traj([0, 1], [[0.5, 0, 0.5, 0.5]] * 2)
        b = _traj([0, 1], [[0.5, 0, 0.5, 0.5, 0.5]] * 2, counts=(2, 1))
        with pytest.raises(ValueError):
            sup_deviation(a, b, 1.0)

    def test_interpolates_between_grids(self):
        a = _traj([0, 1], [[0, 0, 0, 0], [1, 0, 0, 0]])
        b = _traj([0, 0.5, 1], [[0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0]])
        assert sup_deviation(a, b, 1.0) == pytest.approx(0.5)

    def test_symmetric(self):
        a = _traj([0, 0.3, 1], [[0, 0, 0, 0], [0.2, 0.1, 0, 0], [1, 0, 0.3, 0]])
        b = _traj([0, 0.5, 1], [[0, 0.1, 0, 0], [0.4, 0, 0, 0], [0.7, 0, 0, 0]])
        assert sup_deviation(a, b, 1.0) == sup_deviation(b, a, 1.0)

    def test_must_cover_interval(self):
        a = _traj([0, 0.5], [[0, 0, 0, 0]] * 2)
        with pytest.raises(ValueError):
            sup_deviation(a, a, 1.0)


def test_trajectory_rejects_nonincreasing_tau():
    with pytest.raises(ValueError):
        _traj([0, 0], [[0.5, 0, 0.5, 0.5]] * 2)


def test_csv_round_trip_exact():
    rng = np.random.default_rng(3)
    tau = np.cumsum(rng.uniform(0.01, 0.1, 20))
    tau[0] = 0.0
    tr = _traj(tau, rng.uniform(0, 1, (20, 5)), counts=(2, 1))
    buf = io.StringIO()
    write_csv(tr, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "tau,Q,W,E1_1,E1_2,E2_1"
    back = read_csv(io.StringIO(text), counts=(2, 1))
    assert np.array_equal(back.tau, tr.tau)
    assert np.array_equal(back.data, tr.data)
