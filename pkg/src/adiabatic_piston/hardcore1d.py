"""Exact event-driven dynamics of hard-core gas particles and heavy pistons in [0, 1].

All motion between collisions is linear, so collision times are solved in
closed form and the state is only touched at events.  Positions are kept as
``x(t) = x0 + v * (t - t0)`` relative to the last event that changed the
object's velocity, which avoids the drift of incremental stepping.

Gas particles never interact with each other.  Pistons reflect off the
walls at 0 and 1; with at least one particle per chamber this never happens
before the particle between them is hit.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .core import MassProfile, NPistonState, NumericalError, SlowState, Trajectory

SIMULTANEITY_TOL = 1e-12
GRAZING_SPEED = 1e-14

PARTICLE_PISTON = "particle-piston"
PARTICLE_WALL = "particle-wall"
PISTON_WALL = "piston-wall"


class EventQueueError(NumericalError):
    """Inconsistent event ordering; carries a dump of the offending state."""


@dataclass
class Piston:
    Q: float
    V: float
    M: float


@dataclass
class Particle:
    q: float
    v: float
    m: float = 1.0


@dataclass
class Event:
    time: float
    kind: str
    participants: tuple


@dataclass
class FullState1D:
    """Pistons at ``Q_1 < ... < Q_{N-1}`` split [0, 1] into ``N`` chambers of gas."""

    pistons: list[Piston]
    chambers: list[list[Particle]]
    t: float = 0.0

    def __post_init__(self):
        if len(self.chambers) != len(self.pistons) + 1:
            raise ValueError("need exactly one more chamber than pistons")
        bounds = [0.0] + [p.Q for p in self.pistons] + [1.0]
        for a, b in zip(bounds, bounds[1:]):
            if b < a:
                raise ValueError("pistons must be ordered inside [0, 1]")
        for p in self.pistons:
            if not p.M > 0:
                raise ValueError("piston masses must be positive")
            if math.isinf(p.M) and p.V != 0:
                raise ValueError("an infinitely heavy piston must be at rest")
        for c, chamber in enumerate(self.chambers):
            for g in chamber:
                if not g.m > 0:
                    raise ValueError("gas masses must be positive")
                if not bounds[c] <= g.q <= bounds[c + 1]:
                    raise ValueError(f"particle at {g.q} outside chamber {c}")

    @classmethod
    def single(cls, Q, V, M, left, right, t=0.0) -> "FullState1D":
        """One piston; ``left``/``right`` are sequences of ``(q, v)`` or ``(q, v, m)``."""
        return cls([Piston(Q, V, M)], [[Particle(*g) for g in left], [Particle(*g) for g in right]], t)

    @property
    def n_pistons(self) -> int:
        return len(self.pistons)

    def copy(self) -> "FullState1D":
        return copy.deepcopy(self)

    def reversed(self) -> "FullState1D":
        s = self.copy()
        for p in s.pistons:
            p.V = -p.V
        for ch in s.chambers:
            for g in ch:
                g.v = -g.v
        return s

    def total_energy(self) -> float:
        e = [0.5 * g.m * g.v * g.v for ch in self.chambers for g in ch]
        e += [0.5 * p.M * p.V * p.V for p in self.pistons if not math.isinf(p.M)]
        return math.fsum(e)

    def mass_profile(self) -> MassProfile:
        if self.n_pistons != 1:
            raise ValueError("mass profile is defined for a single piston")
        return MassProfile(self.pistons[0].M, tuple(g.m for g in self.chambers[0]),
                           tuple(g.m for g in self.chambers[1]))

    def slow_state(self, eps: float | None = None) -> SlowState:
        if self.n_pistons != 1:
            raise ValueError("use npiston_state() for several pistons")
        p = self.pistons[0]
        W = _rescaled(p.V, p.M, eps)
        return SlowState(p.Q, W, tuple(0.5 * g.m * g.v * g.v for g in self.chambers[0]),
                         tuple(0.5 * g.m * g.v * g.v for g in self.chambers[1]), 1)

    def npiston_state(self, eps: float) -> NPistonState:
        return NPistonState(tuple(p.Q for p in self.pistons),
                            tuple(_rescaled(p.V, p.M, eps) for p in self.pistons),
                            tuple(tuple(0.5 * g.m * g.v * g.v for g in ch) for ch in self.chambers))


def _rescaled(V, M, eps):
    if eps is None:
        return 0.0 if math.isinf(M) else V * math.sqrt(M)
    return 0.0 if eps == 0 else V / eps


# Collision laws ------------------------------------------------------------

def collide_particle_piston(v, V, m, M, side=1):
    """Elastic collision of a gas particle (mass ``m``) with a piston (mass ``M``).

    ``side=1`` for a particle left of the piston (approaching when ``v > V``),
    ``side=2`` for one on the right.  ``M = inf`` reflects off a frozen piston.
    """
    rel = v - V if side == 1 else V - v
    if rel <= 0:
        raise EventQueueError(f"separating collision: v={v!r}, V={V!r}, side={side}")
    if math.isinf(M):
        return 2.0 * V - v, V
    s = m + M
    return ((m - M) * v + 2.0 * M * V) / s, (2.0 * m * v + (M - m) * V) / s


def collide_rescaled(s, W, m, eps, side=1):
    """Collision law in the slow coordinates ``(s, W)`` with ``W = V / eps``.

    For a left particle this is the matrix
    ``[[1 - eps^2 m, -2 eps], [2 eps m, 1 - eps^2 m]] / (1 + eps^2 m)``; the
    right-hand particle is its mirror image.
    """
    if s <= 0:
        raise ValueError("speed must be positive")
    sign = 1.0 if side == 1 else -1.0
    if s <= sign * eps * W:
        raise ValueError(f"inadmissible collision: s={s}, eps*W={eps * W}")
    em = eps * eps * m
    d = 1.0 + em
    s_new = ((1.0 - em) * s - sign * 2.0 * eps * W) / d
    W_new = (sign * 2.0 * eps * m * s + (1.0 - em) * W) / d
    return s_new, W_new


def rescaled_matrix(m, eps, side=1) -> np.ndarray:
    sign = 1.0 if side == 1 else -1.0
    em = eps * eps * m
    return np.array([[1.0 - em, -sign * 2.0 * eps], [sign * 2.0 * eps * m, 1.0 - em]]) / (1.0 + em)


def angle_variable(q, v, Q, side=1):
    """Angle coordinate in [0, 1) of a free particle; 1/2 exactly at the piston."""
    if v == 0:
        raise ValueError("angle variable undefined for a particle at rest")
    if side == 1:
        x = q / (2.0 * Q)
        phi = x if v > 0 else 1.0 - x
    else:
        x = (1.0 - q) / (2.0 * (1.0 - Q))
        phi = x if v < 0 else 1.0 - x
    return phi % 1.0


# Engine --------------------------------------------------------------------

class HardCoreEngine:
    """Event-driven integrator for a :class:`FullState1D`.

    Per-particle next-event candidates are cached and refreshed only for the
    participants of the last event; a piston collision refreshes every
    particle of its two chambers.
    """

    def __init__(self, state: FullState1D, eps: float | None = None, check: bool = False):
        self.check = check
        self.now = state.t
        self.n_chambers = len(state.chambers)
        P = state.pistons
        if eps is None and len(P) == 1:
            eps = 0.0 if math.isinf(P[0].M) else 1.0 / math.sqrt(P[0].M)
        self.eps = eps
        self.px = [p.Q for p in P]
        self.pv = [p.V for p in P]
        self.pm = [p.M for p in P]
        self.pt = [state.t] * len(P)
        self.gx, self.gv, self.gm, self.gt, self.gc = [], [], [], [], []
        self.members: list[list[int]] = []
        for c, ch in enumerate(state.chambers):
            idx = []
            for g in ch:
                idx.append(len(self.gx))
                self.gx.append(g.q)
                self.gv.append(g.v)
                self.gm.append(g.m)
                self.gt.append(state.t)
                self.gc.append(c)
            self.members.append(idx)
        self.rank = [0] * len(self.gx)
        for idx in self.members:
            for r, i in enumerate(idx):
                self.rank[i] = r
        n = len(self.gx)
        self.cand = [math.inf] * n
        self.cside = [0] * n
        self.skip = [0] * n
        self.counts = {PARTICLE_PISTON: 0, PARTICLE_WALL: 0, PISTON_WALL: 0, "grazing": 0}
        self.n_events = 0
        self.energy0 = self.total_energy()
        for i in range(n):
            self._candidate(i)

    # -- state access --
    def total_energy(self) -> float:
        e = [0.5 * m * v * v for m, v in zip(self.gm, self.gv)]
        e += [0.5 * M * V * V for M, V in zip(self.pm, self.pv) if not math.isinf(M)]
        return math.fsum(e)

    def piston_position(self, p, t):
        return self.px[p] + self.pv[p] * (t - self.pt[p])

    def state(self) -> FullState1D:
        t = self.now
        pistons = [Piston(self.piston_position(p, t), self.pv[p], self.pm[p]) for p in range(len(self.px))]
        chambers = [[Particle(self.gx[i] + self.gv[i] * (t - self.gt[i]), self.gv[i], self.gm[i])
                     for i in idx] for idx in self.members]
        return FullState1D(pistons, chambers, t)

    def energies(self):
        return [0.5 * m * v * v for m, v in zip(self.gm, self.gv)]

    # -- event times --
    def _candidate(self, i):
        now = self.now
        c = self.gc[i]
        v = self.gv[i]
        x = self.gx[i] + v * (now - self.gt[i])
        best, side = math.inf, 0
        if self.skip[i] != -1:
            if c == 0:
                xb, vb = 0.0, 0.0
            else:
                p = c - 1
                xb, vb = self.px[p] + self.pv[p] * (now - self.pt[p]), self.pv[p]
            rel = vb - v
            if rel > 0:
                gap = x - xb
                best, side = now + (gap if gap > 0 else 0.0) / rel, -1
        if self.skip[i] != 1:
            if c == self.n_chambers - 1:
                xb, vb = 1.0, 0.0
            else:
                xb, vb = self.px[c] + self.pv[c] * (now - self.pt[c]), self.pv[c]
            rel = v - vb
            if rel > 0:
                gap = xb - x
                t = now + (gap if gap > 0 else 0.0) / rel
                if t < best:
                    best, side = t, 1
        self.cand[i] = best
        self.cside[i] = side

    def _piston_wall_time(self, p):
        V = self.pv[p]
        if V < 0 and p == 0:
            x = self.piston_position(p, self.now)
            return self.now + max(x, 0.0) / -V
        if V > 0 and p == len(self.px) - 1:
            x = self.piston_position(p, self.now)
            return self.now + max(1.0 - x, 0.0) / V
        return math.inf

    def next_event(self) -> Event:
        """Earliest pending event, ties within the simultaneity tolerance broken
        by chamber index then particle index."""
        cand = self.cand
        tmin = min(cand) if cand else math.inf
        pw = [(self._piston_wall_time(p), p) for p in range(len(self.px))]
        for t, _ in pw:
            tmin = min(tmin, t)
        if tmin == math.inf:
            raise EventQueueError("no future event: all relevant velocities vanish")
        lim = tmin + SIMULTANEITY_TOL
        best_key, best = None, None
        for i, t in enumerate(cand):
            if t <= lim:
                key = (self.gc[i], self.rank[i])
                if best_key is None or key < best_key:
                    best_key, best = key, i
        if best is not None:
            t, side = cand[best], self.cside[best]
            c = self.gc[best]
            wall = (side == -1 and c == 0) or (side == 1 and c == self.n_chambers - 1)
            if wall:
                return Event(t, PARTICLE_WALL, (best, 0 if side == -1 else 1))
            return Event(t, PARTICLE_PISTON, (best, c - 1 if side == -1 else c))
        for t, p in pw:
            if t <= lim:
                return Event(t, PISTON_WALL, (p, 0 if self.pv[p] < 0 else 1))
        raise EventQueueError("event selection failed")  # unreachable

    def _dump(self):
        return {"t": self.now, "pistons": list(zip(self.px, self.pv, self.pt)),
                "particles": list(zip(self.gx, self.gv, self.gt, self.gc))}

    # -- event processing --
    def apply(self, ev: Event):
        te = ev.time
        if te < self.now - SIMULTANEITY_TOL:
            raise EventQueueError(f"event time regression {te!r} < {self.now!r}: {self._dump()}")
        if te < self.now:
            te = self.now
        self.now = te
        self.n_events += 1
        if ev.kind == PARTICLE_WALL:
            i, w = ev.participants
            v = self.gv[i]
            if abs(v) < GRAZING_SPEED:
                self.counts["grazing"] += 1
                self.skip[i] = -1 if w == 0 else 1
            else:
                self.gx[i] = 0.0 if w == 0 else 1.0
                self.gv[i] = -v
                self.gt[i] = te
                self.skip[i] = 0
                self.counts[PARTICLE_WALL] += 1
            self._candidate(i)
        elif ev.kind == PARTICLE_PISTON:
            i, p = ev.participants
            side = 1 if self.gc[i] == p else 2
            v, V = self.gv[i], self.pv[p]
            if abs(v - V) < GRAZING_SPEED:
                self.counts["grazing"] += 1
                self.skip[i] = 1 if side == 1 else -1
                self._candidate(i)
                return
            xp = self.px[p] + V * (te - self.pt[p])
            v_new, V_new = collide_particle_piston(v, V, self.gm[i], self.pm[p], side)
            self.gx[i], self.gv[i], self.gt[i] = xp, v_new, te
            self.px[p], self.pv[p], self.pt[p] = xp, V_new, te
            self.counts[PARTICLE_PISTON] += 1
            self._refresh_chambers(p)
        else:
            p, w = ev.participants
            self.px[p] = 0.0 if w == 0 else 1.0
            self.pv[p] = -self.pv[p]
            self.pt[p] = te
            self.counts[PISTON_WALL] += 1
            self._refresh_chambers(p)
        if self.check:
            self.check_ordering()

    def _refresh_chambers(self, p):
        for c in (p, p + 1):
            for j in self.members[c]:
                self.skip[j] = 0
                self._candidate(j)

    def check_ordering(self, tol=1e-9):
        t = self.now
        bounds = [0.0] + [self.piston_position(p, t) for p in range(len(self.px))] + [1.0]
        for a, b in zip(bounds, bounds[1:]):
            if b < a - tol:
                raise EventQueueError(f"piston ordering violated: {self._dump()}")
        for i, c in enumerate(self.gc):
            x = self.gx[i] + self.gv[i] * (t - self.gt[i])
            if not bounds[c] - tol <= x <= bounds[c + 1] + tol:
                raise EventQueueError(f"particle {i} escaped chamber {c}: {self._dump()}")

    # -- driver --
    def run(self, t_end, sample_every=None, record=None, max_events=None):
        """Advance to ``t_end`` (or ``max_events``), calling ``record(t)`` on the
        sampling grid ``k * sample_every`` with the state frozen at that time."""
        k = 0
        if sample_every is not None:
            k = max(0, math.ceil(self.now / sample_every - 1e-9))
        ts = k * sample_every if sample_every is not None else math.inf
        stop = "t_end"
        while True:
            if max_events is not None and self.n_events >= max_events:
                stop = "max_events"
                break
            try:
                ev = self.next_event()
            except EventQueueError:
                if all(v == 0 for v in self.gv) and all(V == 0 for V in self.pv):
                    ev = Event(math.inf, "none", ())
                else:
                    raise
            if ev.time > t_end:
                break
            while ts <= ev.time and ts <= t_end:
                record(ts)
                k += 1
                ts = k * sample_every
            self.apply(ev)
        t_stop = t_end if stop == "t_end" else self.now
        while ts <= t_stop * (1 + 1e-12):
            record(ts)
            k += 1
            ts = k * sample_every
        if stop == "t_end":
            self.now = max(self.now, t_end)
        return stop

    def stats(self) -> dict:
        e1 = self.total_energy()
        return {"events": dict(self.counts), "n_events": self.n_events,
                "energy_initial": self.energy0, "energy_final": e1,
                "energy_drift": abs(e1 - self.energy0) / abs(self.energy0) if self.energy0 else 0.0}


def next_event(state: FullState1D) -> Event:
    """Earliest future collision of ``state``."""
    return HardCoreEngine(state).next_event()


def simulate_hard_1d(initial: FullState1D, t_end: float, sample_every: float,
                     eps: float | None = None, max_events: int | None = None,
                     check: bool = False, seed=None) -> Trajectory:
    """Run the event engine and sample the slow variables on the fast-time grid.

    The returned trajectory is indexed by slow time ``tau = eps * t``; for a
    frozen piston (``eps == 0``) fast time is used instead.  Time is counted
    from the initial state, whatever its ``t``.  ``meta`` holds
    event counts, energy drift and the final full state.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if initial.t != 0.0:
        initial = FullState1D(initial.pistons, initial.chambers, 0.0)
    eng = HardCoreEngine(initial, eps=eps, check=check)
    eps_ = eng.eps if eng.eps is not None else 0.0
    scale = eps_ if eps_ > 0 else 1.0
    n_p = len(eng.px)
    rows, taus = [], []
    inv = [0.0 if eps_ == 0 else 1.0 / eps_] * n_p
    if eps is None:
        inv = [0.0 if math.isinf(M) else math.sqrt(M) for M in eng.pm]

    def record(t):
        row = [eng.px[p] + eng.pv[p] * (t - eng.pt[p]) for p in range(n_p)]
        row += [eng.pv[p] * inv[p] for p in range(n_p)]
        row += [0.5 * m * v * v for m, v in zip(eng.gm, eng.gv)]
        taus.append(t * scale)
        rows.append(row)

    stop = eng.run(t_end, sample_every, record, max_events)
    counts = tuple(len(m) for m in eng.members)
    traj = Trajectory(np.array(taus), np.array(rows).reshape(len(rows), 2 * n_p + sum(counts)),
                      counts, source="actual", seed=seed, eps=eps_, delta=0.0, dim=1)
    traj.meta.update(eng.stats())
    traj.meta["stop"] = stop
    traj.meta["final_state"] = eng.state()
    return traj


def sample_state(h0: SlowState, masses: MassProfile, rng: np.random.Generator) -> FullState1D:
    """Full state with slow variables exactly ``h0`` and random fast phases.

    Positions are uniform in each chamber and directions are random signs.
    """
    eps = masses.eps
    s_left, s_right = h0.speeds(masses)
    left = [(rng.uniform(0.0, h0.Q), s * rng.choice((-1.0, 1.0)), m)
            for s, m in zip(s_left, masses.left)]
    right = [(rng.uniform(h0.Q, 1.0), s * rng.choice((-1.0, 1.0)), m)
             for s, m in zip(s_right, masses.right)]
    return FullState1D.single(h0.Q, eps * h0.W, masses.M, left, right)
