"""Averaged equations for the slow variables and their conserved quantities.

All fields act on the flat slow-state array ``(Q, W, E_1j..., E_2j...)`` (or
``(Q_i..., W_i..., E_cj...)`` for several pistons) and are written in slow
time ``tau = eps * t``.

Kinds of system:

``hard1d``
    point particles in a segment; ``dW = sum m s^2 / Q - sum m s^2 / (1 - Q)``.
``soft1d``
    soft walls of width ``delta``; pressures are ``sqrt(8 m E) / T`` with the
    bounce period ``T`` from :mod:`adiabatic_piston.softcore1d`.
``ddim``
    billiard chambers in dimension ``d`` with areas ``|D_1| = A1 + ell Q`` and
    ``|D_2| = A2 + ell (1 - Q)``.
``npiston``
    ``N - 1`` pistons of rescaled masses ``Mhat_i`` in ``[0, 1]``.  The flow is
    the Hamiltonian flow of ``sum Mhat W^2 / 2 + sum E_c(0) L_c(0)^2 / L_c^2``
    together with the adiabatic law ``E_c L_c^2 = const`` of each chamber.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import MassProfile, NPistonState, NumericalError, SlowState, Trajectory, Window
from .softcore1d import get_kernel, phase_integral, soft_averaged_rhs

KINDS = ("hard1d", "soft1d", "ddim", "npiston")


@dataclass
class AveragedSystem:
    kind: str = "hard1d"
    masses: MassProfile | None = None
    delta: float = 0.0
    kernel: object = "cubic"
    d: int = 1
    A1: float = 0.0
    A2: float = 0.0
    ell: float = 1.0
    piston_masses: tuple[float, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.kind == "soft1d":
            if self.delta < 0:
                raise ValueError("delta must be non-negative")
            self.kernel = get_kernel(self.kernel)
        if self.kind == "ddim":
            if self.d not in (1, 2, 3):
                raise ValueError("d must be 1, 2 or 3")
            if self.A1 < 0 or self.A2 < 0 or not self.ell > 0:
                raise ValueError("need A1, A2 >= 0 and ell > 0")
        if self.kind == "npiston":
            self.piston_masses = tuple(float(x) for x in self.piston_masses)
            if not self.piston_masses or min(self.piston_masses) <= 0:
                raise ValueError("npiston needs positive rescaled piston masses")

    @classmethod
    def rectangle(cls, d=1, ell=1.0) -> "AveragedSystem":
        """d-dimensional system whose chambers are the two halves of the tube."""
        return cls("ddim", d=d, A1=0.0, A2=0.0, ell=ell)

    def areas(self, Q):
        if self.kind == "ddim":
            return self.A1 + self.ell * Q, self.A2 + self.ell * (1.0 - Q)
        return Q, 1.0 - Q

    def exponent(self) -> float:
        return 2.0 / self.d if self.kind == "ddim" else 2.0

    def gas_masses(self, n1, n2):
        if self.masses is None:
            return np.ones(n1), np.ones(n2)
        return np.asarray(self.masses.left, float), np.asarray(self.masses.right, float)


# Fields ------------------------------------------------------------------------

def hard1d_speed_rhs(Q, W, s1, s2, m1=None, m2=None):
    """Averaged field for the hard-core gas in speed coordinates ``(Q, W, s_1j, s_2j)``."""
    s1, s2 = np.asarray(s1, float), np.asarray(s2, float)
    m1 = np.ones_like(s1) if m1 is None else np.asarray(m1, float)
    m2 = np.ones_like(s2) if m2 is None else np.asarray(m2, float)
    if not 0.0 < Q < 1.0:
        raise ValueError("Q must lie in (0, 1)")
    dW = np.sum(m1 * s1 * s1) / Q - np.sum(m2 * s2 * s2) / (1.0 - Q)
    return W, dW, -s1 * W / Q, s2 * W / (1.0 - Q)


def _check_Q(Q):
    if not 0.0 < Q < 1.0:
        raise ValueError(f"Q={Q} outside (0, 1): a chamber has collapsed")


def _field(system: AveragedSystem, y: np.ndarray, counts) -> np.ndarray:
    kind = system.kind
    if kind == "npiston":
        return _npiston_field(system, y, counts)
    n1 = counts[0]
    Q, W = y[0], y[1]
    E1, E2 = y[2:2 + n1], y[2 + n1:]
    _check_Q(Q)
    if kind in ("hard1d", "ddim"):
        # in energy coordinates the hard-core field does not involve the gas
        # masses (m s^2 = 2E) and is the d = 1 field on the unit tube
        a1, a2 = system.areas(Q)
        if a1 <= 0 or a2 <= 0:
            raise ValueError("chamber area vanishes")
        c1 = 2.0 * system.ell / (system.d * a1)
        c2 = 2.0 * system.ell / (system.d * a2)
        dW = c1 * np.sum(E1) - c2 * np.sum(E2)
        return np.concatenate(([W, dW], -W * c1 * E1, W * c2 * E2))
    h = SlowState(Q, W, tuple(E1), tuple(E2))
    return soft_averaged_rhs(h, system.delta, system.masses, system.kernel)


def averaged_rhs(system: AveragedSystem, h: SlowState | NPistonState) -> np.ndarray:
    """Averaged vector field at ``h`` as a flat array in ``h.as_array()`` order."""
    return _field(system, h.as_array(), h.counts)


def _npiston_split(y, counts):
    p = len(counts) - 1
    Q, W = y[:p], y[p:2 * p]
    E, k = [], 2 * p
    for n in counts:
        E.append(y[k:k + n])
        k += n
    return Q, W, E


def _npiston_field(system, y, counts):
    Q, W, E = _npiston_split(y, counts)
    p = len(Q)
    if len(system.piston_masses) != p:
        raise ValueError("one rescaled mass per piston required")
    edges = np.concatenate(([0.0], Q, [1.0]))
    L = np.diff(edges)
    if np.any(L <= 0):
        raise ValueError("chamber collapse: piston positions not strictly ordered")
    Wext = np.concatenate(([0.0], W, [0.0]))
    P = np.array([2.0 * np.sum(e) / l for e, l in zip(E, L)])  # chamber "pressures" 2E/L
    dW = (P[:-1] - P[1:]) / np.asarray(system.piston_masses)
    dE = [-2.0 * e * (Wext[c + 1] - Wext[c]) / L[c] for c, e in enumerate(E)]
    return np.concatenate([W, dW] + dE)


def npiston_rhs(system: AveragedSystem, state: NPistonState) -> np.ndarray:
    """Averaged field of the multi-piston system in ``state.as_array()`` order."""
    return _npiston_field(system, state.as_array(), state.counts)


# Conserved quantities ----------------------------------------------------------

def closed_form_energies(system: AveragedSystem, h0: SlowState, Q: float):
    """Gas energies at piston position ``Q`` on the averaged orbit through ``h0``.

    Hard and d-dimensional gases obey ``E |D(Q)|^(2/d) = const``; for the
    soft-core gas the phase integral of every particle is held fixed.
    """
    _check_Q(Q)
    if system.kind == "soft1d":
        return _soft_energies(system, h0, Q)
    if system.kind == "npiston":
        raise ValueError("use npiston_energies for the multi-piston system")
    a10, a20 = system.areas(h0.Q)
    a1, a2 = system.areas(Q)
    r = system.exponent()
    f1, f2 = (a10 / a1) ** r, (a20 / a2) ** r
    return tuple(e * f1 for e in h0.left), tuple(e * f2 for e in h0.right)


def _soft_energies(system, h0, Q):
    k, d = system.kernel, system.delta
    n1, n2 = h0.counts
    m1, m2 = system.gas_masses(n1, n2)

    def solve(E0, m, side):
        I0 = phase_integral(h0.Q, E0, d, m, side, k, method="auto")
        f = lambda E: phase_integral(Q, E, d, m, side, k, method="auto") - I0
        hi = k.height * (1 - 1e-12)
        return optimize.brentq(f, 1e-300, hi, xtol=1e-15, rtol=1e-14)

    return (tuple(solve(E, m, 1) for E, m in zip(h0.left, m1)),
            tuple(solve(E, m, 2) for E, m in zip(h0.right, m2)))


def npiston_energies(state0: NPistonState, Q) -> tuple[tuple[float, ...], ...]:
    edges0 = np.concatenate(([0.0], state0.Q, [1.0]))
    edges = np.concatenate(([0.0], np.asarray(Q, float), [1.0]))
    r = (np.diff(edges0) / np.diff(edges)) ** 2
    return tuple(tuple(e * f for e in ch) for ch, f in zip(state0.energies, r))


def effective_hamiltonian(system: AveragedSystem, h, h0) -> float:
    """Effective Hamiltonian of the averaged flow through ``h0``, evaluated at ``h``.

    It depends on ``h`` only through ``(Q, W)``: the gas energies are replaced
    by their values along the averaged orbit.
    """
    if system.kind == "npiston":
        e = npiston_energies(h0, h.Q)
        kin = 0.5 * sum(M * w * w for M, w in zip(system.piston_masses, h.W))
        return kin + math.fsum(x for ch in e for x in ch)
    e1, e2 = closed_form_energies(system, h0, h.Q)
    return 0.5 * h.W * h.W + math.fsum(e1 + e2)


def _heff_fast(system, y, y0, counts):
    """Vectorised effective Hamiltonian on flat arrays (not for soft1d)."""
    if system.kind == "npiston":
        Q, W, _ = _npiston_split(y, counts)
        Q0, _, E0 = _npiston_split(y0, counts)
        L = np.diff(np.concatenate(([0.0], Q, [1.0])))
        L0 = np.diff(np.concatenate(([0.0], Q0, [1.0])))
        pot = sum(np.sum(e) * (l0 / l) ** 2 for e, l0, l in zip(E0, L0, L))
        return 0.5 * np.dot(system.piston_masses, W * W) + pot
    n1 = counts[0]
    a10, a20 = system.areas(y0[0])
    a1, a2 = system.areas(y[0])
    r = system.exponent()
    return 0.5 * y[1] ** 2 + np.sum(y0[2:2 + n1]) * (a10 / a1) ** r + np.sum(y0[2 + n1:]) * (a20 / a2) ** r


def _energy_sum(system, y, counts):
    """``W^2 / 2 + sum E`` (weighted by piston masses for several pistons)."""
    if system.kind == "npiston":
        p = len(counts) - 1
        W = y[p:2 * p]
        return 0.5 * math.fsum(M * w * w for M, w in zip(system.piston_masses, W)) + math.fsum(y[2 * p:])
    return 0.5 * y[1] ** 2 + math.fsum(y[2:])


# Integration -------------------------------------------------------------------
# The stepping loop works on plain Python lists: the states are short and
# per-call numpy overhead would dominate.

def _scalar_field(system, counts):
    """Field and conserved quantity as functions of a list, for the fast loop."""
    kind = system.kind
    n1 = counts[0]
    if kind in ("hard1d", "ddim"):
        # hard1d carries the defaults d = 1, A1 = A2 = 0, ell = 1
        ell, d, A1, A2 = system.ell, system.d, system.A1, system.A2

        def f(y):
            Q, W = y[0], y[1]
            if not 0.0 < Q < 1.0:
                _check_Q(Q)
            c1 = 2.0 * ell / (d * (A1 + ell * Q))
            c2 = 2.0 * ell / (d * (A2 + ell * (1.0 - Q)))
            e1, e2 = y[2:2 + n1], y[2 + n1:]
            return [W, c1 * sum(e1) - c2 * sum(e2)] + [-W * c1 * e for e in e1] + [W * c2 * e for e in e2]

        return f
    if kind == "npiston":
        p = len(counts) - 1
        Mh = system.piston_masses
        if len(Mh) != p:
            raise ValueError("one rescaled mass per piston required")
        bounds = []
        k = 2 * p
        for n in counts:
            bounds.append((k, k + n))
            k += n

        def f(y):
            edges = [0.0] + list(y[:p]) + [1.0]
            L = [b - a for a, b in zip(edges, edges[1:])]
            if min(L) <= 0:
                raise ValueError("chamber collapse: piston positions not strictly ordered")
            Wext = [0.0] + list(y[p:2 * p]) + [0.0]
            P = [2.0 * sum(y[a:b]) / l for (a, b), l in zip(bounds, L)]
            out = list(y[p:2 * p]) + [(P[i] - P[i + 1]) / Mh[i] for i in range(p)]
            for c, (a, b) in enumerate(bounds):
                g = -2.0 * (Wext[c + 1] - Wext[c]) / L[c]
                out += [g * e for e in y[a:b]]
            return out

        return f
    return lambda y: list(_field(system, np.asarray(y), counts))


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f([a + 0.5 * h * b for a, b in zip(y, k1)])
    k3 = f([a + 0.5 * h * b for a, b in zip(y, k2)])
    k4 = f([a + h * b for a, b in zip(y, k3)])
    h6 = h / 6.0
    return [a + h6 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)], k1


def _integrate(system, y0, counts, tau_end, step, window, max_halvings=6, guard_tol=1e-10):
    if step <= 0 or tau_end < 0:
        raise ValueError("need step > 0 and tau_end >= 0")
    f = _scalar_field(system, counts)
    y0a = np.asarray(y0, float)
    if system.kind == "soft1d":
        H = lambda y: _energy_sum(system, y, counts)
    elif system.kind == "npiston":
        p = len(counts) - 1
        Mh = system.piston_masses
        e0 = [0.0] + [float(x) for x in y0[:p]] + [1.0]
        L0 = [b - a for a, b in zip(e0, e0[1:])]
        S, k = [], 2 * p
        for n in counts:
            S.append(math.fsum(y0[k:k + n]))
            k += n

        def H(y):
            e = [0.0] + list(y[:p]) + [1.0]
            pot = sum(s_ * (l0 / (b - a)) ** 2 for s_, l0, a, b in zip(S, L0, e, e[1:]))
            return 0.5 * sum(m * w * w for m, w in zip(Mh, y[p:2 * p])) + pot
    else:
        n1, r = counts[0], system.exponent()
        a10, a20 = system.areas(float(y0[0]))
        S1, S2 = math.fsum(y0[2:2 + n1]), math.fsum(y0[2 + n1:])

        def H(y):
            a1, a2 = system.areas(y[0])
            return 0.5 * y[1] * y[1] + S1 * (a10 / a1) ** r + S2 * (a20 / a2) ** r
    n_p = len(counts) - 1
    y = [float(x) for x in y0]
    taus, ys, dys = [0.0], [y], []
    tau = 0.0
    n_steps = int(round(tau_end / step))
    if abs(n_steps * step - tau_end) > 1e-9 * max(tau_end, 1.0):
        n_steps = int(math.ceil(tau_end / step))
    h_used = step
    stop = math.inf
    if window is not None and not window.contains_rows(y0a, n_p)[0]:
        raise ValueError("initial state lies outside the window")
    Hy = H(y)
    check_every = 1 if window is not None else 0
    for i in range(n_steps):
        target = min((i + 1) * step, tau_end)
        scale = max(abs(Hy), 1e-300)
        h = target - tau
        for attempt in range(max_halvings + 1):
            sub = 2 ** attempt
            z, ok, k_first = y, True, None
            for _ in range(sub):
                z, k = _rk4(f, z, h / sub)
                if k_first is None:
                    k_first = k
                Hz = H(z)
                if abs(Hz - Hy) / scale > guard_tol:
                    ok = False
                    break
            if ok:
                break
        else:
            raise NumericalError(f"effective Hamiltonian drift exceeds {guard_tol} per step at tau={tau}")
        h_used = min(h_used, h / sub)
        dys.append(k_first)
        y, tau, Hy = z, target, Hz
        taus.append(tau)
        ys.append(y)
        if check_every and not window.contains_rows(np.asarray(y), n_p)[0]:
            stop = tau
            break
    dys.append(f(y) if stop == math.inf else dys[-1])
    return np.array(taus), np.array(ys), np.array(dys), stop, h_used


def integrate_averaged(system: AveragedSystem, h0: SlowState, tau_end: float, step: float = 1e-4,
                       window: Window | None = None) -> Trajectory:
    """Classical RK4 at fixed step with a per-step effective-Hamiltonian guard.

    A step whose relative drift of the conserved quantity exceeds ``1e-10`` is
    retried as 2, 4, ... 64 substeps before giving up.  For ``soft1d`` the
    guard monitors ``W^2/2 + sum E``, which the averaged flow also conserves
    and which avoids inverting phase integrals at every step.  Integration
    halts at the first step outside ``window``; ``meta['stopping_time']`` is
    that slow time (``inf`` if the window is never left).
    ``extra['Heff']`` holds the effective Hamiltonian at each sample and
    ``meta['dense']`` a cubic Hermite interpolant.
    """
    y0 = h0.as_array()
    counts = h0.counts
    taus, ys, dys, stop, h_used = _integrate(system, y0, counts, tau_end, step, window)
    traj = Trajectory(taus, ys, counts, source="averaged", eps=0.0, delta=system.delta,
                      dim=system.d if system.kind == "ddim" else h0.dim)
    if system.kind == "soft1d":
        traj.extra["Heff"] = np.array([_energy_sum(system, y, counts) for y in ys])
    else:
        traj.extra["Heff"] = np.array([_heff_fast(system, y, y0, counts) for y in ys])
    traj.meta.update(stopping_time=stop, step=step, min_step=h_used,
                     dense=HermiteDense(taus, ys, dys))
    return traj


def integrate_npiston(system: AveragedSystem, state0: NPistonState, tau_end: float,
                      step: float = 1e-4, window: Window | None = None) -> Trajectory:
    """Integrate the multi-piston averaged flow (same scheme as :func:`integrate_averaged`)."""
    if system.kind != "npiston":
        raise ValueError("system kind must be 'npiston'")
    y0 = state0.as_array()
    counts = state0.counts
    taus, ys, dys, stop, h_used = _integrate(system, y0, counts, tau_end, step, window)
    traj = Trajectory(taus, ys, counts, source="averaged", eps=0.0)
    traj.extra["Heff"] = np.array([_heff_fast(system, y, y0, counts) for y in ys])
    traj.meta.update(stopping_time=stop, step=step, min_step=h_used, dense=HermiteDense(taus, ys, dys))
    return traj


class HermiteDense:
    """Piecewise cubic Hermite interpolant through RK4 nodes and their slopes."""

    def __init__(self, t, y, dy):
        self.t, self.y, self.dy = np.asarray(t), np.asarray(y), np.asarray(dy)

    def __call__(self, tau):
        tau = np.atleast_1d(np.asarray(tau, float))
        t = self.t
        if np.any(tau < t[0] - 1e-12) or np.any(tau > t[-1] + 1e-12):
            raise ValueError("dense output requested outside the integrated range")
        i = np.clip(np.searchsorted(t, tau, side="right") - 1, 0, len(t) - 2)
        h = (t[i + 1] - t[i])[:, None]
        s = ((tau - t[i])[:, None]) / h
        y0, y1 = self.y[i], self.y[i + 1]
        d0, d1 = self.dy[i] * h, self.dy[i + 1] * h
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1


def detect_period(traj: Trajectory, column: str | None = None) -> np.ndarray:
    """Periods between successive upward zero crossings of ``W``.

    Crossing times are located by linear interpolation between samples.
    """
    name = column or ("W" if traj.n_pistons == 1 else "W1")
    w = traj.column(name)
    t = traj.tau
    idx = np.nonzero((w[:-1] < 0) & (w[1:] >= 0))[0]
    cross = t[idx] - w[idx] * (t[idx + 1] - t[idx]) / (w[idx + 1] - w[idx])
    return np.diff(cross)


def equilibrium_state(Q, E_left, n1=1, n2=1) -> SlowState:
    """Slow state at rest with equal pressures ``E_1 / Q = E_2 / (1 - Q)``.

    ``E_left`` is the total left energy; each chamber's total is split evenly.
    """
    E_right = E_left * (1.0 - Q) / Q
    return SlowState(Q, 0.0, (E_left / n1,) * n1, (E_right / n2,) * n2)
