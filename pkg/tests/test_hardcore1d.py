import math
from fractions import Fraction

import numpy as np
import pytest

from adiabatic_piston.core import MassProfile, SlowState
from adiabatic_piston.hardcore1d import (PARTICLE_PISTON, PARTICLE_WALL, EventQueueError, FullState1D,
                                         HardCoreEngine, Particle, Piston, angle_variable,
                                         collide_particle_piston, collide_rescaled, next_event,
                                         rescaled_matrix, sample_state, simulate_hard_1d)


def _conservation_oracle(v, V, m, M):
    """Solve momentum and energy conservation exactly with rationals."""
    v, V, m, M = map(Fraction, (v, V, m, M))
    # the non-trivial root of the quadratic is v' = 2 * vcm - v
    vcm = (m * v + M * V) / (m + M)
    return 2 * vcm - v, 2 * vcm - V


class TestCollisionLaw:
    def test_equal_masses_exchange(self):
        assert collide_particle_piston(1.0, 0.0, 1.0, 1.0) == (0.0, 1.0)

    def test_m1_M3(self):
        v, V = collide_particle_piston(1.0, 0.0, 1.0, 3.0)
        ov, oV = _conservation_oracle(1, 0, 1, 3)
        assert (ov, oV) == (Fraction(-1, 2), Fraction(1, 2))
        assert (v, V) == (-0.5, 0.5)

    def test_heavy_limit(self):
        v, V = collide_particle_piston(1.0, 0.2, 1.0, math.inf)
        assert (v, V) == (2 * 0.2 - 1.0, 0.2)
        v, V = collide_particle_piston(1.0, 0.2, 1.0, 1e300)
        assert v == pytest.approx(-0.6) and V == pytest.approx(0.2)

    def test_separating_raises(self):
        with pytest.raises(EventQueueError):
            collide_particle_piston(0.1, 0.2, 1.0, 2.0)
        with pytest.raises(EventQueueError):
            collide_particle_piston(0.3, 0.2, 1.0, 2.0, side=2)

    def test_right_side(self):
        v, V = collide_particle_piston(-1.0, 0.0, 1.0, 3.0, side=2)
        assert (v, V) == (0.5, -0.5)


class TestRescaled:
    def test_eps_zero_identity(self):
        assert collide_rescaled(0.7, 0.3, 1.0, 0.0) == (0.7, 0.3)

    def test_eps_01(self):
        s, W = collide_rescaled(1.0, 0.0, 1.0, 0.1)
        assert s == pytest.approx(0.99 / 1.01, rel=1e-15)
        assert W == pytest.approx(0.2 / 1.01, rel=1e-15)

    def test_matches_physical_law(self):
        eps, m, s, W = 0.05, 1.3, 0.8, -0.4
        M = 1 / eps ** 2
        v, V = collide_particle_piston(s, eps * W, m, M)
        s2, W2 = collide_rescaled(s, W, m, eps)
        assert -v == pytest.approx(s2, rel=1e-12)
        assert V / eps == pytest.approx(W2, rel=1e-12)

    def test_determinant_one(self):
        for eps in (0.0, 1e-3, 0.1, 0.7):
            for side in (1, 2):
                assert abs(np.linalg.det(rescaled_matrix(1.7, eps, side)) - 1) <= 1e-12

    def test_inadmissible(self):
        with pytest.raises(ValueError):
            collide_rescaled(0.1, 20.0, 1.0, 0.1)


class TestNextEvent:
    def test_piston_hit(self):
        st = FullState1D.single(0.5, 0.0, 1e4, [(0.2, 1.0)], [(0.9, 1e-3)])
        ev = next_event(st)
        assert ev.kind == PARTICLE_PISTON
        assert ev.time == pytest.approx(0.3, abs=1e-15)

    def test_wall_hit(self):
        st = FullState1D.single(0.5, 0.0, 1e4, [(0.2, -1.0)], [(0.9, -1e-3)])
        ev = next_event(st)
        assert ev.kind == PARTICLE_WALL
        assert ev.time == pytest.approx(0.2, abs=1e-15)

    def test_moving_piston(self):
        st = FullState1D.single(0.5, 0.1, 1e4, [(0.2, 1.0)], [(0.9, 0.01)])
        ev = next_event(st)
        assert ev.kind == PARTICLE_PISTON
        assert ev.time == pytest.approx(1 / 3, rel=1e-14)

    def test_no_event(self):
        st = FullState1D.single(0.5, 0.0, 1e4, [(0.2, 0.0)], [(0.9, 0.0)])
        with pytest.raises(Exception):
            next_event(st)


class TestAngle:
    def test_at_piston(self):
        for Q in (0.2, 0.5, 0.83):
            assert angle_variable(Q, 1.0, Q) == 0.5

    def test_at_wall(self):
        assert angle_variable(0.0, 1.0, 0.4) == 0.0

    def test_returning(self):
        assert angle_variable(0.3, -1.0, 0.6) == pytest.approx(0.75)

    def test_right_mirror(self):
        assert angle_variable(0.6, -1.0, 0.6, side=2) == 0.5

    def test_zero_velocity(self):
        with pytest.raises(ValueError):
            angle_variable(0.3, 0.0, 0.6)


def test_state_validation():
    with pytest.raises(ValueError):
        FullState1D.single(0.5, 0.0, 1.0, [(0.7, 1.0)], [])
    with pytest.raises(ValueError):
        FullState1D([Piston(0.6, 0, 1), Piston(0.4, 0, 1)], [[], [], []])
    with pytest.raises(ValueError):
        FullState1D.single(0.5, 0.1, math.inf, [], [])


def test_frozen_piston_speeds_constant():
    st = FullState1D.single(0.4, 0.0, math.inf, [(0.1, 0.7), (0.3, -1.1)], [(0.8, 0.9)])
    tr = simulate_hard_1d(st, 50.0, 0.5)
    assert np.all(tr.data[:, 0] == 0.4)
    assert np.allclose(tr.data[:, 2:], tr.data[0, 2:], rtol=0, atol=1e-15)


def test_frozen_piston_collision_period():
    Q, s = 0.4, 0.7
    st = FullState1D.single(Q, 0.0, math.inf, [(0.1, s)], [(0.8, 0.5)])
    eng = HardCoreEngine(st)
    times = []
    while len(times) < 4:
        ev = eng.next_event()
        eng.apply(ev)
        if ev.kind == PARTICLE_PISTON and ev.participants[0] == 0:
            times.append(ev.time)
    assert np.allclose(np.diff(times), 2 * Q / s, rtol=1e-12)


def test_energy_conserved_long_run():
    rng = np.random.default_rng(11)
    h0 = SlowState(0.4, 0.3, (0.5, 0.2), (0.4,))
    st = sample_state(h0, MassProfile(100.0, (1.0, 2.0), (1.5,)), rng)
    tr = simulate_hard_1d(st, 1e4, 100.0)
    assert tr.meta["energy_drift"] <= 1e-9


def test_sample_state_exact_slow_variables():
    rng = np.random.default_rng(0)
    h0 = SlowState(0.35, 0.8, (0.5, 0.1), (0.3,))
    masses = MassProfile(400.0, (1.0, 2.0), (1.0,))
    h = sample_state(h0, masses, rng).slow_state()
    assert h.Q == h0.Q
    assert h.W == pytest.approx(h0.W, rel=1e-15)
    assert np.allclose(h.left + h.right, h0.left + h0.right, rtol=1e-15)


def test_reversibility():
    rng = np.random.default_rng(5)
    st = sample_state(SlowState(0.45, 0.5, (0.5, 0.3), (0.4, 0.6)), MassProfile(10.0, (1, 1), (1, 1)), rng)
    eng = HardCoreEngine(st.copy())
    eng.run(5.0)
    assert eng.stats()["n_events"] <= 1000
    back = HardCoreEngine(eng.state().reversed())
    back.run(10.0)
    fin = back.state().reversed()
    assert abs(fin.pistons[0].Q - st.pistons[0].Q) < 1e-6
    for c in range(2):
        for a, b in zip(fin.chambers[c], st.chambers[c]):
            assert abs(a.q - b.q) < 1e-6 and abs(a.v - b.v) < 1e-6


def test_ordering_checked_every_event():
    rng = np.random.default_rng(2)
    st = sample_state(SlowState(0.5, 0.0, (0.5,) * 3, (0.5,) * 3), MassProfile(50.0, (1,) * 3, (1,) * 3), rng)
    tr = simulate_hard_1d(st, 200.0, 1.0, check=True)
    assert tr.meta["n_events"] > 100


def test_simultaneous_piston_hits_left_first():
    # both particles reach the piston at t = 0.1; the left hit must be processed first
    st = FullState1D.single(0.5, 0.0, 4.0, [(0.4, 1.0)], [(0.6, -1.0)])
    eng = HardCoreEngine(st)
    ev = eng.next_event()
    assert ev.kind == PARTICLE_PISTON and ev.participants[0] == 0
    eng.apply(ev)
    ev2 = eng.next_event()
    assert ev2.kind == PARTICLE_PISTON and ev2.time == pytest.approx(0.1)


def test_npiston_run_conserves_energy():
    st = FullState1D([Piston(0.3, 0.0, 100.0), Piston(0.7, 0.0, 100.0)],
                     [[Particle(0.1, 1.0)], [Particle(0.5, -0.8)], [Particle(0.9, 0.6)]])
    tr = simulate_hard_1d(st, 2000.0, 10.0, eps=0.1)
    assert tr.counts == (1, 1, 1)
    assert tr.meta["energy_drift"] < 1e-12
    Q = tr.data[:, :2]
    assert np.all(Q[:, 0] < Q[:, 1])


def test_relative_velocity_reversal_and_momentum():
    rng = np.random.default_rng(9)
    for _ in range(100):
        m, M = rng.uniform(0.1, 5), rng.uniform(1, 1e4)
        V = rng.uniform(-1, 1)
        v = V + rng.uniform(0.01, 2)
        v2, V2 = collide_particle_piston(v, V, m, M)
        assert (v2 - V2) == pytest.approx(-(v - V), rel=1e-12)
        assert m * v2 + M * V2 == pytest.approx(m * v + M * V, rel=1e-13, abs=1e-13)
