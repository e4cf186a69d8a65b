"""Exact event-driven dynamics of point particles in a 2D container with a moving piston.

Free flight is linear and the piston moves with piecewise constant velocity,
so every collision time is found in closed form.  The piston face is the
segment ``{Q} x [0, ell]``; it also reflects off invisible walls at ``Q = 0``
and ``Q = 1``.

Horizontal motion is handled with the same arithmetic as the 1D engine
(``x(t) = x0 + v (t - t0)``, gaps divided by closing speeds, candidates
refreshed for every particle after a piston collision), so a rectangular
container with purely horizontal velocities reproduces the 1D system.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from ..core import SlowState, Trajectory
from ..hardcore1d import (GRAZING_SPEED, PARTICLE_PISTON, PARTICLE_WALL, PISTON_WALL,
                          SIMULTANEITY_TOL, EventQueueError, collide_particle_piston)
from .geometry import BilliardDomain, GeometryError, SingularTrajectory, get_domain, reflect


@dataclass
class Particle2D:
    x: float
    y: float
    vx: float
    vy: float
    side: int = 1
    m: float = 1.0

    @property
    def energy(self) -> float:
        return 0.5 * self.m * (self.vx * self.vx + self.vy * self.vy)


@dataclass
class FullState2D:
    """Piston ``(Q, V, M)`` and gas particles, each tagged with its chamber ``side``."""

    Q: float
    V: float
    M: float
    particles: list[Particle2D]
    t: float = 0.0

    def __post_init__(self):
        self.particles = [p if isinstance(p, Particle2D) else Particle2D(*p) for p in self.particles]
        if not 0.0 <= self.Q <= 1.0:
            raise ValueError("piston must lie in [0, 1]")
        if not self.M > 0:
            raise ValueError("piston mass must be positive")
        if math.isinf(self.M) and self.V != 0:
            raise ValueError("an infinitely heavy piston must be at rest")
        for p in self.particles:
            if p.side not in (1, 2):
                raise ValueError("particle side must be 1 or 2")

    @property
    def eps(self) -> float:
        return 0.0 if math.isinf(self.M) else 1.0 / math.sqrt(self.M)

    def by_side(self, side):
        return [p for p in self.particles if p.side == side]

    def counts(self):
        return len(self.by_side(1)), len(self.by_side(2))

    def total_energy(self) -> float:
        e = [p.energy for p in self.particles]
        if not math.isinf(self.M):
            e.append(0.5 * self.M * self.V * self.V)
        return math.fsum(e)

    def slow_state(self):
        W = 0.0 if math.isinf(self.M) else self.V * math.sqrt(self.M)
        return SlowState(self.Q, W, tuple(p.energy for p in self.by_side(1)),
                         tuple(p.energy for p in self.by_side(2)), 2)

    def copy(self):
        return copy.deepcopy(self)

    def check_inside(self, domain: BilliardDomain, tol=1e-9):
        """Raise if a particle lies outside its chamber.

        Points on the boundary count as inside when a short step along the
        velocity enters the chamber.
        """
        for p in self.particles:
            inside = domain.contains(p.side, self.Q, p.x, p.y)
            if not inside:
                inside = domain.contains(p.side, self.Q, p.x + tol * p.vx, p.y + tol * p.vy)
            if not inside:
                raise ValueError(f"particle at ({p.x}, {p.y}) outside chamber {p.side}")


def collide_piston_2d(v_perp, W, eps):
    """Piston collision in rescaled coordinates.

    ``(v_perp', W') = [[eps^2 - 1, 2 eps], [2 eps, 1 - eps^2]] (v_perp, W) / (1 + eps^2)``
    with ``v_perp`` the horizontal velocity component of a unit-mass particle.
    Requires an approaching pair, ``v_perp > eps * W`` for a left particle.
    """
    if v_perp - eps * W <= 0:
        raise ValueError("particle and piston are not approaching")
    e2 = eps * eps
    d = 1.0 + e2
    return ((e2 - 1.0) * v_perp + 2.0 * eps * W) / d, (2.0 * eps * v_perp + (1.0 - e2) * W) / d


def is_clean_collision(v_before, v_after, eps, Emax, side=1) -> bool:
    """Whether a piston collision sends the particle away for good.

    For a left particle: ``v_before > 0`` and ``v_after < -eps * sqrt(2 Emax)``;
    velocities of right particles are mirrored.
    """
    if side == 2:
        v_before, v_after = -v_before, -v_after
    return v_before > 0 and v_after < -eps * math.sqrt(2.0 * Emax)


class Billiard2DEngine:
    """Event-driven integrator for :class:`FullState2D` inside a :class:`BilliardDomain`."""

    def __init__(self, state: FullState2D, domain: BilliardDomain, Emax: float | None = None):
        self.domain = domain
        self.ell = domain.ell
        self.tables = (domain.static(1), domain.static(2))
        self.now = state.t
        self.px, self.pv, self.pm, self.pt = state.Q, state.V, state.M, state.t
        self.eps = state.eps
        P = state.particles
        order = sorted(range(len(P)), key=lambda i: (P[i].side, i))
        P = [P[i] for i in order]
        self.x = [p.x for p in P]
        self.y = [p.y for p in P]
        self.vx = [p.vx for p in P]
        self.vy = [p.vy for p in P]
        self.m = [p.m for p in P]
        self.t0 = [state.t] * len(P)
        self.side = [p.side for p in P]
        self.rank = []
        seen = {1: 0, 2: 0}
        for s in self.side:
            self.rank.append(seen[s])
            seen[s] += 1
        n = len(P)
        self.cand = [math.inf] * n
        self.ckind = [None] * n  # ("static", piece, hx, hy) or ("piston",)
        self.counts = {PARTICLE_PISTON: 0, PARTICLE_WALL: 0, PISTON_WALL: 0, "non_clean": 0}
        self.n_events = 0
        self.first_non_clean = math.inf
        if Emax is None:
            Emax = max([p.energy for p in P] + [0.0])
        self.Emax = Emax
        self.energy0 = self.total_energy()
        for i in range(n):
            self._candidate(i)

    def total_energy(self):
        e = [0.5 * m * (a * a + b * b) for m, a, b in zip(self.m, self.vx, self.vy)]
        if not math.isinf(self.pm):
            e.append(0.5 * self.pm * self.pv * self.pv)
        return math.fsum(e)

    def energies(self):
        return [0.5 * m * (a * a + b * b) for m, a, b in zip(self.m, self.vx, self.vy)]

    def piston_position(self, t):
        return self.px + self.pv * (t - self.pt)

    def _candidate(self, i):
        now = self.now
        vx, vy = self.vx[i], self.vy[i]
        x = self.x[i] + vx * (now - self.t0[i])
        y = self.y[i] + vy * (now - self.t0[i])
        best, kind = math.inf, None
        if vx != 0.0 or vy != 0.0:
            dt, k, hx, hy = self.tables[self.side[i] - 1].trace(x, y, vx, vy, allow_escape=True)
            if k >= 0:
                best, kind = now + dt, ("static", k, hx, hy)
        xb = self.px + self.pv * (now - self.pt)
        if self.side[i] == 1:
            rel = vx - self.pv
            gap = xb - x
        else:
            rel = self.pv - vx
            gap = x - xb
        if rel > 0:
            t = now + (gap if gap > 0 else 0.0) / rel
            if t < best:
                best, kind = t, ("piston",)
        self.cand[i] = best
        self.ckind[i] = kind

    def _piston_wall_time(self):
        V = self.pv
        if V < 0:
            return self.now + max(self.piston_position(self.now), 0.0) / -V
        if V > 0:
            return self.now + max(1.0 - self.piston_position(self.now), 0.0) / V
        return math.inf

    def next_event(self):
        cand = self.cand
        tmin = min(cand) if cand else math.inf
        tw = self._piston_wall_time()
        tmin = min(tmin, tw)
        if tmin == math.inf:
            raise EventQueueError("no future event")
        lim = tmin + SIMULTANEITY_TOL
        best, key = None, None
        for i, t in enumerate(cand):
            if t <= lim:
                k = (self.side[i], self.rank[i])
                if key is None or k < key:
                    best, key = i, k
        if best is not None:
            return cand[best], best
        return tw, -1

    def apply(self, te, i):
        if te < self.now - SIMULTANEITY_TOL:
            raise EventQueueError(f"event time regression {te!r} < {self.now!r}")
        te = max(te, self.now)
        self.now = te
        self.n_events += 1
        if i < 0:
            self.px = 0.0 if self.pv < 0 else 1.0
            self.pv = -self.pv
            self.pt = te
            self.counts[PISTON_WALL] += 1
            for j in range(len(self.x)):
                self._candidate(j)
            return
        kind = self.ckind[i]
        dtp = te - self.t0[i]
        if kind[0] == "static":
            _, k, hx, hy = kind
            piece = self.tables[self.side[i] - 1].pieces[k]
            nx, ny = piece.normal_at(hx, hy)
            self.vx[i], self.vy[i] = reflect(self.vx[i], self.vy[i], nx, ny)
            self.x[i], self.y[i], self.t0[i] = hx, hy, te
            self.counts[PARTICLE_WALL] += 1
            self._candidate(i)
            return
        xp = self.px + self.pv * (te - self.pt)
        y = self.y[i] + self.vy[i] * dtp
        if y < 0.0 or y > self.ell:
            raise SingularTrajectory(f"piston hit outside the face at y={y}")
        if y < 1e-12 or self.ell - y < 1e-12:
            raise SingularTrajectory("particle hit the edge of the piston face")
        v, V = self.vx[i], self.pv
        if abs(v - V) < GRAZING_SPEED:
            raise SingularTrajectory("grazing piston collision")
        v_new, V_new = collide_particle_piston(v, V, self.m[i], self.pm, self.side[i])
        if not is_clean_collision(v - V, v_new - V_new, self.eps, self.Emax, self.side[i]):
            self.counts["non_clean"] += 1
            self.first_non_clean = min(self.first_non_clean, te)
        self.x[i], self.y[i], self.vx[i], self.t0[i] = xp, y, v_new, te
        self.px, self.pv, self.pt = xp, V_new, te
        self.counts[PARTICLE_PISTON] += 1
        for j in range(len(self.x)):
            self._candidate(j)

    def state(self) -> FullState2D:
        t = self.now
        parts = [Particle2D(self.x[i] + self.vx[i] * (t - self.t0[i]), self.y[i] + self.vy[i] * (t - self.t0[i]),
                            self.vx[i], self.vy[i], self.side[i], self.m[i]) for i in range(len(self.x))]
        return FullState2D(self.piston_position(t), self.pv, self.pm, parts, t)

    def run(self, t_end, sample_every=None, record=None, max_events=None, on_event=None):
        k = 0
        ts = 0.0 if sample_every is not None else math.inf
        stop = "t_end"
        while True:
            if max_events is not None and self.n_events >= max_events:
                stop = "max_events"
                break
            te, i = self.next_event()
            if te > t_end:
                break
            while ts <= te and ts <= t_end:
                record(ts)
                k += 1
                ts = k * sample_every
            self.apply(te, i)
            if on_event is not None:
                on_event(self, i)
        t_stop = t_end if stop == "t_end" else self.now
        while ts <= t_stop * (1 + 1e-12):
            record(ts)
            k += 1
            ts = k * sample_every
        if stop == "t_end":
            self.now = max(self.now, t_end)
        return stop

    def stats(self):
        e1 = self.total_energy()
        return {"events": dict(self.counts), "n_events": self.n_events,
                "energy_initial": self.energy0, "energy_final": e1,
                "energy_drift": abs(e1 - self.energy0) / self.energy0 if self.energy0 else 0.0,
                "first_non_clean_t": self.first_non_clean}


def simulate_2d(initial: FullState2D, domain, t_end: float, sample_every: float,
                Emax: float | None = None, max_events: int | None = None, seed=None) -> Trajectory:
    """Run the 2D engine and sample ``(Q, W, E_1j, E_2j)`` on the fast-time grid.

    Slow time ``tau = eps * t`` indexes the result (fast time for a frozen
    piston).  ``Emax`` sets the clean-collision threshold; it defaults to the
    largest initial particle energy.  ``meta['events']['non_clean']`` counts
    collisions that were not clean.
    """
    domain = get_domain(domain)
    if initial.t != 0.0:
        initial = FullState2D(initial.Q, initial.V, initial.M, initial.particles, 0.0)
    eng = Billiard2DEngine(initial, domain, Emax)
    eps = eng.eps
    scale = eps if eps > 0 else 1.0
    inv = 0.0 if math.isinf(eng.pm) else math.sqrt(eng.pm)
    taus, rows = [], []

    def record(t):
        row = [eng.px + eng.pv * (t - eng.pt), eng.pv * inv]
        row += [0.5 * m * (a * a + b * b) for m, a, b in zip(eng.m, eng.vx, eng.vy)]
        taus.append(t * scale)
        rows.append(row)

    stop = eng.run(t_end, sample_every, record, max_events)
    counts = (eng.side.count(1), eng.side.count(2))
    traj = Trajectory(np.array(taus), np.array(rows).reshape(len(rows), 2 + sum(counts)), counts,
                      source="actual", seed=seed, eps=eps, dim=2)
    traj.meta.update(eng.stats())
    traj.meta["stop"] = stop
    traj.meta["final_state"] = eng.state()
    return traj


def sample_state_2d(domain, Q, M, energies_left, energies_right, rng, W=0.0, max_tries=100000) -> FullState2D:
    """Uniform positions in each chamber, uniform directions, speeds set by the energies.

    This is the conditioned sampler used for ensembles: the slow variables are
    exactly ``(Q, W, E)`` and the fast variables are drawn independently.
    """
    domain = get_domain(domain)
    eps = 0.0 if math.isinf(M) else 1.0 / math.sqrt(M)
    parts = []
    for side, energies in ((1, energies_left), (2, energies_right)):
        lo, hi = domain.bounding_box(side, Q)
        table = domain.table(side, Q)
        for E in energies:
            for _ in range(max_tries):
                x, y = rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])
                if 1e-9 < y < domain.ell - 1e-9 and table.contains(x, y):
                    break
            else:
                raise RuntimeError("rejection sampling failed")
            th = rng.uniform(0.0, 2.0 * math.pi)
            s = math.sqrt(2.0 * E)
            parts.append(Particle2D(x, y, s * math.cos(th), s * math.sin(th), side))
    return FullState2D(Q, eps * W, M, parts)


def next_boundary_hit(x, y, vx, vy, domain, side, Q, V=0.0):
    """Earliest boundary hit of a particle in chamber ``side`` with the piston at
    ``Q`` moving at velocity ``V``.

    Returns ``(dt, piece, hx, hy)`` where ``piece`` indexes the static walls of
    the chamber or is ``"piston"`` for the moving face.
    """
    if vx == 0.0 and vy == 0.0:
        raise ValueError("particle is at rest")
    domain = get_domain(domain)
    dt, k, hx, hy = domain.static(side).trace(x, y, vx, vy, allow_escape=True)
    rel = vx - V if side == 1 else V - vx
    if rel > 0:
        gap = Q - x if side == 1 else x - Q
        tp = max(gap, 0.0) / rel
        yp = y + vy * tp
        if tp < dt and 0.0 <= yp <= domain.ell:
            if min(yp, domain.ell - yp) < 1e-12:
                raise SingularTrajectory("corner hit at the edge of the piston face")
            return tp, "piston", x + vx * tp, yp
    if k < 0:
        raise GeometryError(f"ray from ({x}, {y}) along ({vx}, {vy}) leaves the container")
    return dt, k, hx, hy
