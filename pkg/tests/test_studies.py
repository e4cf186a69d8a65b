import math

import numpy as np
import pytest

from adiabatic_piston.averaged import AveragedSystem, integrate_averaged
from adiabatic_piston.core import ConfigError, SlowState
from adiabatic_piston.hardcore1d import FullState1D, simulate_hard_1d
from adiabatic_piston.studies import (DEMOS, RateFit, StudyConfig, averaging_demo, non_increasing, run_study)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            StudyConfig.from_dict({"kind": "demos", "colour": "red"})

    @pytest.mark.parametrize("bad", [{"masses": []}, {"masses": [1e3, -1]}, {"ensemble": 0}, {"Q0": 1.2},
                                     {"E_left": [0.0]}, {"kind": "nope"}, {"tau_end": 0}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            StudyConfig.from_dict(bad)

    def test_soft_energy_above_barrier(self):
        cfg = StudyConfig(kind="soft-uniform", E_left=[1.5], masses=[1e2, 1e3, 1e4])
        with pytest.raises(ConfigError):
            run_study(cfg)

    def test_soft_delta_too_wide(self):
        cfg = StudyConfig(kind="soft-uniform", deltas=[0.3], Q0=0.4, E_left=[0.1], E_right=[0.1])
        with pytest.raises(ConfigError):
            run_study(cfg)


class TestRateFit:
    def test_exact_power_law(self):
        x = np.array([1e2, 1e3, 1e4, 1e5])
        f = RateFit.fit(x, 3.0 * x ** -0.5)
        assert f.slope == pytest.approx(-0.5, abs=1e-12)
        assert f.r2 == pytest.approx(1.0)
        assert f.intercept == pytest.approx(math.log10(3.0))

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            RateFit.fit([1, 2], [1, 2])

    def test_positive(self):
        with pytest.raises(ValueError):
            RateFit.fit([1, 2, 3], [1, 0, 2])


def test_non_increasing():
    assert non_increasing([0.9, 0.5, 0.1])
    assert non_increasing([0.5, 0.55, 0.1], allowance=0.1)
    assert not non_increasing([0.5, 0.8, 0.1], allowance=0.1)
    assert not non_increasing([0.5, 0.55, 0.5, 0.52], allowance=0.1)


class TestDemos:
    def test_time_periodic_closed_form(self):
        # h(t) = eps sin t + eps^2 t, so the sup over t <= 1/eps is at most (1 + 1) eps
        for eps in (0.1, 0.01):
            d = averaging_demo("time-periodic", eps)
            t = np.linspace(0, 1 / eps, 200001)
            exact = np.max(np.abs(eps * np.sin(t) + eps * eps * t))
            # the demo takes the sup over its step grid, dt = 0.05
            assert d == pytest.approx(exact, rel=1e-3)
            assert d <= 2 * eps

    def test_all_demos_first_order(self):
        for name in DEMOS:
            a, b = averaging_demo(name, 0.1), averaging_demo(name, 0.01)
            assert 7 < a / b < 14


def test_convergence_small_grid():
    cfg = StudyConfig(kind="convergence-1d", masses=[1e2, 1e3, 1e4], ensemble=2, samples_per_unit=200)
    res = run_study(cfg)
    assert len(res.rows) == 6
    assert set(res.summary) >= {"worst_case", "spread", "excluded", "n_runs", "fit"}
    assert res.summary["excluded"] == 0
    assert all(r["energy_drift"] < 1e-10 for r in res.rows)


def test_studies_reproducible():
    cfg = StudyConfig(kind="convergence-1d", masses=[1e2, 1e3, 1e4], ensemble=2, samples_per_unit=100, seed=7)
    a, b = run_study(cfg), run_study(cfg)
    assert a.rows == b.rows


def test_threads_preserve_order():
    base = dict(kind="convergence-1d", masses=[1e2, 1e3, 1e4], ensemble=2, samples_per_unit=100)
    a = run_study(StudyConfig(**base, threads=1))
    b = run_study(StudyConfig(**base, threads=2))
    assert a.rows == b.rows


def test_frozen_piston_control():
    # a frozen piston keeps Q fixed, so its Q-deviation is the averaged orbit's excursion
    h0 = SlowState(0.3, 0.0, (0.5,), (0.5,))
    av = integrate_averaged(AveragedSystem("hard1d"), h0, 1.0, step=1e-3)
    st = FullState1D.single(0.3, 0.0, math.inf, [(0.1, 1.0)], [(0.6, -1.0)])
    tr = simulate_hard_1d(st, 1.0, 1e-3)
    assert np.all(tr.column("Q") == 0.3)
    dev_q = np.max(np.abs(tr.interpolate(av.tau)[:, 0] - av.column("Q")))
    assert dev_q == pytest.approx(np.max(np.abs(av.column("Q") - 0.3)), rel=1e-15)


def test_soft_uniform_small():
    cfg = StudyConfig(kind="soft-uniform", masses=[1e2, 1e3, 1e4], deltas=[0.05, 0.1], ensemble=1,
                      E_left=[0.1], E_right=[0.15], samples_per_unit=100)
    res = run_study(cfg)
    assert set(res.summary["slopes"]) == {"0.05", "0.1"}
    assert len(res.rows) == 6


def test_compare_small():
    cfg = StudyConfig(kind="compare", masses=[1e4], deltas=[0.1, 0.05], ensemble=1, E_left=[0.1],
                      E_right=[0.15], samples_per_unit=100)
    res = run_study(cfg)
    assert len(res.rows) == 2
    (ratio,) = res.summary["halving_ratios"]
    assert ratio["delta_from"] == 0.1 and ratio["delta_to"] == 0.05


def test_prob_2d_small():
    cfg = StudyConfig(kind="prob-2d", masses=[1e2, 1e3], ensemble=2, tau_end=0.3, samples_per_unit=100,
                      preset="box")
    res = run_study(cfg)
    assert set(res.summary["fraction_exceeding"]) == {"100.0", "1000.0"}
    assert all(r["energy_drift"] < 1e-10 for r in res.rows)


def test_santalo_box_prediction():
    res = run_study(StudyConfig(kind="santalo", preset="box", samples=5000))
    s = res.summary
    assert s["santalo_predicted"] == pytest.approx(math.pi * s["area"] / (s["speed"] * s["perimeter"]))
    assert s["santalo_predicted"] == pytest.approx(math.pi / 4)
