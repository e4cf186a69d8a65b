"""Experiment harness: ensembles, parameter sweeps and rate fits.

Every study takes a :class:`StudyConfig`, runs independent simulations seeded
as ``base_seed + run_index`` and returns a :class:`StudyResult` holding one
table (a list of flat dict rows, written as CSV) and a JSON-ready summary.
Runs can be spread over a process pool; results are always reduced in run
order, so outputs do not depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .averaged import AveragedSystem, integrate_averaged
from .billiard2d import get_domain, sample_state_2d, simulate_2d
from .billiard2d.geometry import SingularTrajectory
from .billiard2d.measures import (flux_time_average, hemisphere_mean_cos, induced_piston_stats, inducing_check,
                                  mean_free_flight)
from .core import ConfigError, MassProfile, NumericalError, SlowState, Window, stopping_time, sup_deviation
from .hardcore1d import FullState1D, sample_state, simulate_hard_1d
from .softcore1d import SoftFullState, get_kernel, integrate_soft, sample_soft_state

STUDY_KINDS = ("convergence-1d", "soft-uniform", "compare", "prob-2d", "santalo", "flux", "inducing", "demos")


@dataclass
class StudyConfig:
    """Parameters shared by all studies; each study reads the fields it needs."""

    kind: str = "convergence-1d"
    masses: list = field(default_factory=lambda: [1e2, 1e3, 1e4, 1e5, 1e6])
    eps_list: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    deltas: list = field(default_factory=lambda: [0.02, 0.05, 0.1])
    ensemble: int = 32
    seed: int = 0
    tau_end: float = 1.0
    Q0: float = 0.4
    W0: float = 0.0
    E_left: list = field(default_factory=lambda: [0.5])
    E_right: list = field(default_factory=lambda: [0.5])
    window: dict | None = None
    samples_per_unit: int = 1000
    averaged_step: float = 1e-3
    kernel: str = "cubic"
    preset: str | dict = "sinai"
    threshold: float = 0.1
    samples: int = 100000
    speed: float = 1.0
    n_collisions: int = 100000
    threads: int = 1

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}")
        for name in ("masses", "eps_list", "deltas"):
            grid = getattr(self, name)
            if not grid or any(not x > 0 for x in grid):
                raise ConfigError(f"{name} must be a nonempty list of positive numbers")
        if self.ensemble < 1:
            raise ConfigError("ensemble must be at least 1")
        if not self.tau_end > 0:
            raise ConfigError("tau_end must be positive")
        if not 0.0 < self.Q0 < 1.0:
            raise ConfigError("Q0 must lie in (0, 1)")
        if any(e <= 0 for e in list(self.E_left) + list(self.E_right)):
            raise ConfigError("energies must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        names = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def h0(self, dim=1) -> SlowState:
        return SlowState(self.Q0, self.W0, tuple(self.E_left), tuple(self.E_right), dim)

    def make_window(self) -> Window:
        w = dict(Qmin=0.02, Qmax=0.98, Wbound=1e3, Emin=1e-6, Emax=1e3)
        w.update(self.window or {})
        return Window(**w)

    def as_dict(self):
        return asdict(self)


@dataclass
class RateFit:
    """Least-squares line through ``(log10 x, log10 y)``."""

    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float

    @classmethod
    def fit(cls, x, y) -> "RateFit":
        x, y = np.asarray(x, float), np.asarray(y, float)
        if len(x) < 3:
            raise ValueError("a rate fit needs at least 3 points")
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("rate fits need positive data")
        lx, ly = np.log10(x), np.log10(y)
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + intercept)
        ss = np.sum((ly - ly.mean()) ** 2)
        r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
        return cls(lx, ly, float(slope), float(intercept), float(r2))

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "log_x": self.x.tolist(), "log_y": self.y.tolist()}


@dataclass
class StudyResult:
    kind: str
    rows: list
    summary: dict


def _map(fn, jobs, threads):
    """Apply ``fn`` to each job, optionally in worker processes; order is preserved."""
    if threads is None or threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


# Hard-core convergence --------------------------------------------------------

def _hard_job(args):
    h0, M, seed, tau_end, per_unit, av, window = args
    masses = MassProfile(M, (1.0,) * len(h0.left), (1.0,) * len(h0.right))
    rng = np.random.default_rng(seed)
    state = sample_state(h0, masses, rng)
    eps = masses.eps
    tr = simulate_hard_1d(state, tau_end / eps, 1.0 / (per_unit * eps), seed=seed)
    T = min(tau_end, stopping_time(tr, window), stopping_time(av, window))
    return {"M": M, "eps": eps, "seed": seed, "stop_tau": T,
            "sup_deviation": sup_deviation(tr, av, T),
            "energy_drift": tr.meta["energy_drift"], "n_events": tr.meta["n_events"]}


def _worst_case(rows, key, tau_end):
    """Worst case per grid value over runs that stayed in the window long enough."""
    groups, excluded = {}, 0
    for r in rows:
        if r["stop_tau"] < tau_end / 4:
            r["excluded"] = True
            excluded += 1
            continue
        r["excluded"] = False
        groups.setdefault(r[key], []).append(r["sup_deviation"])
    return {k: (max(v), min(v), len(v)) for k, v in sorted(groups.items())}, excluded


def convergence_1d(cfg: StudyConfig) -> StudyResult:
    """Worst-case sup deviation between hard-core runs and the averaged orbit over a mass grid.

    The slow initial state is fixed and the fast phases vary with the seed.
    Runs leaving the window before ``tau_end / 4`` are excluded and counted.
    """
    h0 = cfg.h0()
    window = cfg.make_window()
    av = integrate_averaged(AveragedSystem("hard1d"), h0, cfg.tau_end, step=cfg.averaged_step)
    jobs = [(h0, M, cfg.seed + i, cfg.tau_end, cfg.samples_per_unit, av, window)
            for M in cfg.masses for i in range(cfg.ensemble)]
    rows = _map(_hard_job, jobs, cfg.threads)
    worst, excluded = _worst_case(rows, "M", cfg.tau_end)
    Ms = list(worst)
    summary = {"worst_case": {str(M): worst[M][0] for M in Ms},
               "spread": {str(M): worst[M][0] / worst[M][1] for M in Ms},
               "excluded": excluded, "n_runs": len(rows)}
    if len(Ms) >= 3:
        summary["fit"] = RateFit.fit(Ms, [worst[M][0] for M in Ms]).as_dict()
    return StudyResult(cfg.kind, rows, summary)


# Soft-core uniformity and hard/soft comparison -------------------------------

def _soft_job(args):
    h0, M, delta, kernel, seed, tau_end, per_unit, av, window = args
    masses = MassProfile(M, (1.0,) * len(h0.left), (1.0,) * len(h0.right))
    rng = np.random.default_rng(seed)
    state = sample_soft_state(h0, masses, delta, kernel, rng)
    eps = masses.eps
    tr = integrate_soft(state, tau_end / eps, 1.0 / (per_unit * eps), seed=seed)
    T = min(tau_end, stopping_time(tr, window), stopping_time(av, window))
    return {"M": M, "eps": eps, "delta": delta, "seed": seed, "stop_tau": T,
            "sup_deviation": sup_deviation(tr, av, T), "energy_drift": tr.meta["energy_drift"]}


def _check_soft_energies(h0, deltas, kernel):
    k = get_kernel(kernel)
    top = max(h0.left + h0.right) + 0.5 * h0.W ** 2
    if top >= k.height:
        raise ConfigError(f"energies must stay below the barrier height {k.height}")
    if 2 * max(deltas) >= min(h0.Q, 1 - h0.Q):
        raise ConfigError("largest delta too wide for the initial chambers")


def soft_uniformity(cfg: StudyConfig) -> StudyResult:
    """Sup deviations of soft-core runs from the soft averaged orbit on a (M, delta) grid.

    Reports the worst case over the ensemble for each cell, the fitted slope
    against ``M`` for each ``delta`` and the spread across ``delta`` at fixed ``M``.
    """
    h0 = cfg.h0()
    _check_soft_energies(h0, cfg.deltas, cfg.kernel)
    window = cfg.make_window()
    jobs = []
    for delta in cfg.deltas:
        av = integrate_averaged(AveragedSystem("soft1d", delta=delta, kernel=cfg.kernel), h0, cfg.tau_end,
                                step=cfg.averaged_step)
        jobs += [(h0, M, delta, cfg.kernel, cfg.seed + i, cfg.tau_end, cfg.samples_per_unit, av, window)
                 for M in cfg.masses for i in range(cfg.ensemble)]
    rows = _map(_soft_job, jobs, cfg.threads)
    excluded = 0
    summary = {"slopes": {}, "r2": {}, "worst_case": {}, "delta_spread": {}}
    for delta in cfg.deltas:
        sub = [r for r in rows if r["delta"] == delta]
        worst, exc = _worst_case(sub, "M", cfg.tau_end)
        excluded += exc
        summary["worst_case"][str(delta)] = {str(M): worst[M][0] for M in worst}
        if len(worst) >= 3:
            f = RateFit.fit(list(worst), [worst[M][0] for M in worst])
            summary["slopes"][str(delta)] = f.slope
            summary["r2"][str(delta)] = f.r2
    for M in cfg.masses:
        col = [summary["worst_case"][str(d)].get(str(M)) for d in cfg.deltas]
        col = [c for c in col if c is not None]
        if col:
            summary["delta_spread"][str(M)] = max(col) / min(col)
    summary["excluded"] = excluded
    summary["n_runs"] = len(rows)
    return StudyResult(cfg.kind, rows, summary)


def _compare_job(args):
    h0, M, deltas, kernel, seed, tau_end, per_unit, av = args
    masses = MassProfile(M, (1.0,) * len(h0.left), (1.0,) * len(h0.right))
    eps = masses.eps
    rng = np.random.default_rng(seed)
    base = sample_soft_state(h0, masses, max(deltas), kernel, rng)
    hard = simulate_hard_1d(FullState1D.single(base.Q, eps * base.W, M, base.left, base.right),
                            tau_end / eps, 1.0 / (per_unit * eps), seed=seed)
    floor = sup_deviation(hard, av, tau_end)
    out = []
    for delta in deltas:
        st = SoftFullState(base.Q, base.W, base.left, base.right, eps, delta, kernel)
        soft = integrate_soft(st, tau_end / eps, 1.0 / (per_unit * eps), seed=seed)
        out.append({"M": M, "eps": eps, "delta": delta, "seed": seed,
                    "difference": sup_deviation(soft, hard, tau_end), "eps_floor": floor})
    return out


def hard_soft_comparison(cfg: StudyConfig, floor_factor: float = 3.0) -> StudyResult:
    """Sup difference between soft-core and hard-core runs from identical initial states.

    For each mass the hard run's own deviation from the averaged orbit serves
    as the estimate of the ``O(eps)`` floor.  Successive halvings of ``delta``
    are assessed while the difference at the smaller ``delta`` is at least
    ``floor_factor`` times that floor.
    """
    h0 = cfg.h0()
    deltas = sorted(cfg.deltas, reverse=True)
    _check_soft_energies(h0, deltas, cfg.kernel)
    av = integrate_averaged(AveragedSystem("hard1d"), h0, cfg.tau_end, step=cfg.averaged_step)
    jobs = [(h0, M, deltas, cfg.kernel, cfg.seed + i, cfg.tau_end, cfg.samples_per_unit, av)
            for M in cfg.masses for i in range(cfg.ensemble)]
    rows = [r for block in _map(_compare_job, jobs, cfg.threads) for r in block]
    ratios = []
    for M in cfg.masses:
        for i in range(cfg.ensemble):
            run = [r for r in rows if r["M"] == M and r["seed"] == cfg.seed + i]
            run.sort(key=lambda r: -r["delta"])
            for a, b in zip(run[:-1], run[1:]):
                if not math.isclose(b["delta"], a["delta"] / 2, rel_tol=1e-9):
                    continue
                above = b["difference"] >= floor_factor * b["eps_floor"]
                ratios.append({"M": M, "seed": b["seed"], "delta_from": a["delta"], "delta_to": b["delta"],
                               "ratio": a["difference"] / b["difference"], "above_floor": above})
    assessed = [r["ratio"] for r in ratios if r["above_floor"]]
    summary = {"halving_ratios": ratios, "assessed_ratios": assessed,
               "min_ratio": min(assessed) if assessed else None,
               "max_ratio": max(assessed) if assessed else None, "floor_factor": floor_factor}
    return StudyResult(cfg.kind, rows, summary)


# 2D convergence in probability ------------------------------------------------

def _prob2d_job(args):
    domain, h0, M, seed, tau_end, per_unit, av, threshold, window = args
    eps = 1.0 / math.sqrt(M)
    attempt = 0
    while True:
        rng = np.random.default_rng([seed, attempt])
        state = sample_state_2d(domain, h0.Q, M, h0.left, h0.right, rng, W=h0.W)
        try:
            tr = simulate_2d(state, domain, tau_end / eps, 1.0 / (per_unit * eps),
                             Emax=state.total_energy(), seed=seed)
            break
        except SingularTrajectory:
            attempt += 1
            if attempt > 20:
                raise NumericalError(f"seed {seed}: 20 consecutive singular trajectories")
    t_nc = tr.meta["first_non_clean_t"] * eps
    T = min(tau_end, stopping_time(tr, window), stopping_time(av, window))
    T_clean = min(T, t_nc)
    dev = sup_deviation(tr, av, T_clean) if T_clean > 0 else 0.0
    ev = tr.meta["events"]
    return {"M": M, "eps": eps, "seed": seed, "resampled": attempt, "stop_tau": T,
            "first_non_clean_tau": t_nc, "sup_deviation": dev,
            "sup_deviation_full": sup_deviation(tr, av, T), "exceeds": dev >= threshold,
            "non_clean": ev["non_clean"], "piston_collisions": ev["particle-piston"],
            "energy_drift": tr.meta["energy_drift"]}


def probability_2d(cfg: StudyConfig) -> StudyResult:
    """Fraction of an ensemble whose sup deviation reaches ``cfg.threshold``, for each mass.

    Initial states have the configured slow variables exactly, with positions
    uniform in each chamber and uniform directions.  Deviations are measured
    up to the first non-clean piston collision (or window exit); the fraction
    of runs with any non-clean collision is reported alongside.  Runs that
    hit a corner are resampled and the count reported.
    """
    domain = get_domain(cfg.preset)
    h0 = cfg.h0(dim=2)
    window = cfg.make_window()
    system = AveragedSystem("ddim", d=2, A1=domain.A1, A2=domain.A2, ell=domain.ell)
    av = integrate_averaged(system, h0, cfg.tau_end, step=cfg.averaged_step)
    jobs = [(domain, h0, M, cfg.seed + i, cfg.tau_end, cfg.samples_per_unit, av, cfg.threshold, window)
            for M in cfg.masses for i in range(cfg.ensemble)]
    rows = _map(_prob2d_job, jobs, cfg.threads)
    summary = {"fraction_exceeding": {}, "non_clean_run_fraction": {}, "non_clean_per_collision": {},
               "resampled": sum(r["resampled"] for r in rows), "threshold": cfg.threshold,
               "n": cfg.ensemble}
    for M in cfg.masses:
        sub = [r for r in rows if r["M"] == M]
        summary["fraction_exceeding"][str(M)] = float(np.mean([r["exceeds"] for r in sub]))
        summary["non_clean_run_fraction"][str(M)] = float(np.mean([r["non_clean"] > 0 for r in sub]))
        n_pc = sum(r["piston_collisions"] for r in sub)
        summary["non_clean_per_collision"][str(M)] = sum(r["non_clean"] for r in sub) / max(n_pc, 1)
    return StudyResult(cfg.kind, rows, summary)


def non_increasing(values, allowance=0.0, max_inversions=1) -> bool:
    """Whether ``values`` never increase, except for at most ``max_inversions``
    increases each no larger than ``allowance``."""
    inv = 0
    for a, b in zip(values[:-1], values[1:]):
        if b > a:
            if b - a > allowance:
                return False
            inv += 1
    return inv <= max_inversions


# Billiard statistics -----------------------------------------------------------

def santalo_study(cfg: StudyConfig, Q: float = 1.0) -> StudyResult:
    """Mean free flight of the left chamber against ``pi |D| / (|v| |boundary|)``."""
    domain = get_domain(cfg.preset)
    rng = np.random.default_rng(cfg.seed)
    est = mean_free_flight(domain, 1, Q, cfg.speed, cfg.samples, rng)
    table = domain.table(1, Q)
    summary = {"santalo_predicted": est.predicted, "estimate": est.value, "stderr": est.stderr,
               "rel_error": est.rel_error, "area": table.area(), "perimeter": table.perimeter,
               "speed": cfg.speed, "samples": est.n, "dropped": est.dropped, "preset": str(cfg.preset), "Q": Q}
    return StudyResult(cfg.kind, [summary.copy()], summary)


def inducing_study(cfg: StudyConfig) -> StudyResult:
    """Induced-map statistics on the piston face plus the hemisphere moment check."""
    domain = get_domain(cfg.preset)
    rng = np.random.default_rng(cfg.seed)
    st = induced_piston_stats(domain, 1, cfg.Q0, cfg.speed, cfg.samples, rng)
    chk = inducing_check(domain, 1, cfg.Q0, cfg.speed, cfg.samples, rng)
    hm, hs = hemisphere_mean_cos(cfg.samples, rng)
    summary = {"induced": st.as_dict(), "inducing": chk,
               "hemisphere_mean_cos": hm, "hemisphere_stderr": hs, "hemisphere_predicted": 2.0 / 3.0}
    rows = [{"quantity": "mean_v_perp", **st.momentum.as_dict()},
            {"quantity": "induced_flight_time", **st.flight.as_dict()},
            {"quantity": "inducing_residual", "value": chk["residual"]},
            {"quantity": "hemisphere_mean_cos", "value": hm, "stderr": hs, "predicted": 2.0 / 3.0}]
    return StudyResult(cfg.kind, rows, summary)


def _flux_job(args):
    domain, Q, energy, n, seed = args
    est = flux_time_average(domain, 1, Q, energy, n, np.random.default_rng(seed))
    return {"seed": seed, **est.as_dict()}


def flux_study(cfg: StudyConfig) -> StudyResult:
    """Long-time momentum flux on a frozen piston for ``cfg.ensemble`` random initial conditions."""
    domain = get_domain(cfg.preset)
    energy = 0.5 * cfg.speed ** 2
    jobs = [(domain, cfg.Q0, energy, cfg.n_collisions, cfg.seed + i) for i in range(cfg.ensemble)]
    rows = _map(_flux_job, jobs, cfg.threads)
    summary = {"predicted": rows[0]["predicted"], "values": [r["value"] for r in rows],
               "max_rel_error": max(r["rel_error"] for r in rows), "n_collisions": cfg.n_collisions}
    return StudyResult(cfg.kind, rows, summary)


# Averaging demos -------------------------------------------------------------------

_B, _C = 2.0, 1.0
# phase average of cos(phi) when dphi/dt is proportional to b + c cos(phi)
_MEAN_COS = (math.sqrt(_B * _B - _C * _C) - _B) / _C


def _rate(h, phi):
    return (1.0 + 0.25 * h * h) * (_B + _C * math.cos(phi))


def _demo_time_periodic(eps):
    def f(t, y):
        return (eps * (math.cos(t) + eps),)
    return f


def _demo_one_phase(eps):
    def f(t, y):
        h, p = y
        return (eps * (math.cos(p) - h), _rate(h, p))
    return f


def _demo_two_phase(eps):
    def f(t, y):
        h, p, q = y
        return (eps * (math.cos(p) - h + h * math.sin(q) + 0.5 * math.cos(q)), _rate(h, p), 2.0 * _rate(h, q))
    return f


DEMOS = {
    "time-periodic": {
        "doc": "dh/dt = eps (cos t + eps); averaged field zero",
        "rhs": _demo_time_periodic,
        "y0": (0.0,),
        "averaged": lambda tau, h0: h0,
    },
    "one-phase": {
        "doc": "dh/dt = eps (cos phi - h), dphi/dt = (1 + h^2/4)(2 + cos phi)",
        "rhs": _demo_one_phase,
        "y0": (1.0, 0.0),
        "averaged": lambda tau, h0: _MEAN_COS + (h0 - _MEAN_COS) * math.exp(-tau),
    },
    "two-phase": {
        "doc": "dh/dt = eps (cos phi1 - h + h sin phi2 + cos(phi2) / 2) with "
               "dphi1/dt = (1 + h^2/4)(2 + cos phi1), dphi2/dt = 2 (1 + h^2/4)(2 + cos phi2)",
        "rhs": _demo_two_phase,
        "y0": (1.0, 0.0, 1.5),
        "averaged": lambda tau, h0: 1.5 * _MEAN_COS + (h0 - 1.5 * _MEAN_COS) * math.exp(-tau),
    },
}


def averaging_demo(name: str, eps: float, T: float = 1.0, dt: float = 0.05) -> float:
    """Sup over ``t <= T / eps`` of ``|h(t) - hbar(eps t)|`` for one demo system.

    The exact system is integrated by classical RK4 at fixed step ``dt`` (fast
    time); the averaged solutions are known in closed form.  The deviation is
    checked at every step.
    """
    demo = DEMOS[name]
    f = demo["rhs"](eps)
    hbar = demo["averaged"]
    y = tuple(demo["y0"])
    h0 = y[0]
    n = int(math.ceil(T / eps / dt))
    dt = T / eps / n
    half = 0.5 * dt
    sup = 0.0
    t = 0.0
    for k in range(n):
        k1 = f(t, y)
        k2 = f(t + half, tuple(a + half * b for a, b in zip(y, k1)))
        k3 = f(t + half, tuple(a + half * b for a, b in zip(y, k2)))
        k4 = f(t + dt, tuple(a + dt * b for a, b in zip(y, k3)))
        y = tuple(a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
        t = (k + 1) * dt
        d = abs(y[0] - hbar(eps * t, h0))
        if d > sup:
            sup = d
    return sup


def averaging_demos(cfg: StudyConfig) -> StudyResult:
    """Deviation against ``1/eps`` for each demo system, with a fitted slope."""
    rows, summary = [], {"slopes": {}, "r2": {}}
    for name in DEMOS:
        devs = []
        for eps in cfg.eps_list:
            d = averaging_demo(name, eps, cfg.tau_end)
            devs.append(d)
            rows.append({"demo": name, "eps": eps, "sup_deviation": d})
        fit = RateFit.fit([1.0 / e for e in cfg.eps_list], devs)
        summary["slopes"][name] = fit.slope
        summary["r2"][name] = fit.r2
    return StudyResult(cfg.kind, rows, summary)


STUDIES = {
    "convergence-1d": convergence_1d,
    "soft-uniform": soft_uniformity,
    "compare": hard_soft_comparison,
    "prob-2d": probability_2d,
    "santalo": santalo_study,
    "flux": flux_study,
    "inducing": inducing_study,
    "demos": averaging_demos,
}


def run_study(cfg: StudyConfig) -> StudyResult:
    return STUDIES[cfg.kind](cfg)
