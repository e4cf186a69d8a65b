"""Monte Carlo statistics of the frozen-piston billiard.

Collision points are drawn from the invariant measure of the billiard map,
``cos(phi) dphi dr / (2 |boundary|)``, or from its restriction to the piston
face.  The estimators here compare flight times and momentum transfer with the
closed forms that follow from Santalo's formula:

* mean free flight ``pi |D| / (|v| |boundary|)``
* mean time between piston collisions ``pi |D| / (|v| ell)``
* mean ``|v_perp|`` at the piston ``|v| pi / 4``
* long-time momentum flux on the piston ``E ell / (2 |D|)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import NumericalError
from .geometry import Table, get_domain, normals_many, reflect, trace_many


def _table(domain, side=1, Q=1.0) -> Table:
    if isinstance(domain, Table):
        return domain
    return get_domain(domain).table(side, Q)


def sample_angles(n, rng, d=2):
    """Angles to the normal with density ``cos(phi) / 2`` on ``[-pi/2, pi/2]`` (d=2).

    For ``d=3`` the polar angle on the hemisphere with density ``cos(phi) / pi``
    is returned; then ``cos(phi) = sqrt(u)``.
    """
    u = rng.random(n)
    if d == 2:
        return np.arcsin(2.0 * u - 1.0)
    if d == 3:
        return np.arccos(np.sqrt(u))
    raise ValueError("d must be 2 or 3")


def _points(table: Table, k, u):
    """Boundary points, unit inward normals and unit tangents at offsets ``u`` on pieces ``k``."""
    n = len(k)
    x, y = np.empty(n), np.empty(n)
    nx, ny, tx, ty = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    for j, p in enumerate(table.pieces):
        sel = k == j
        if not np.any(sel):
            continue
        s = u[sel]
        if p.kind == "segment":
            x[sel] = p.p0[0] + s * p.tx
            y[sel] = p.p0[1] + s * p.ty
            tx[sel], ty[sel] = p.tx, p.ty
            nx[sel], ny[sel] = p.nx, p.ny
        else:
            sg = 1.0 if p.sweep > 0 else -1.0
            th = p.theta0 + sg * s / p.R
            c, sn = np.cos(th), np.sin(th)
            x[sel] = p.c[0] + p.R * c
            y[sel] = p.c[1] + p.R * sn
            tx[sel], ty[sel] = -sg * sn, sg * c
            nx[sel], ny[sel] = -ty[sel], tx[sel]
    return x, y, nx, ny, tx, ty


@dataclass
class CollisionSample:
    """Points of the billiard-map phase space with outgoing velocities."""

    r: np.ndarray
    phi: np.ndarray
    piece: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    def __len__(self):
        return len(self.r)


def sample_collision_measure(domain, side=1, Q=1.0, speed=1.0, n=1, rng=None, d=2,
                             pieces=None) -> CollisionSample:
    """Draw ``n`` points from the invariant measure of the billiard map.

    ``r`` is uniform in boundary arc length (restricted to ``pieces`` if given,
    e.g. the piston face) and ``phi`` has density ``cos(phi) / 2``.  Outgoing
    velocities have magnitude ``speed``.
    """
    rng = np.random.default_rng() if rng is None else rng
    table = _table(domain, side, Q)
    if pieces is None:
        L = table.perimeter
        r = rng.uniform(0.0, L, n)
        k = np.searchsorted(table.cum, r, side="right") - 1
        k = np.clip(k, 0, len(table.pieces) - 1)
        u = r - table.cum[k]
    else:
        pieces = np.asarray(pieces)
        lens = table.lengths[pieces]
        cum = np.concatenate(([0.0], np.cumsum(lens)))
        r = rng.uniform(0.0, cum[-1], n)
        j = np.clip(np.searchsorted(cum, r, side="right") - 1, 0, len(pieces) - 1)
        k = pieces[j]
        u = r - cum[j]
    phi = sample_angles(n, rng, d=2)
    x, y, nx, ny, tx, ty = _points(table, k, u)
    c, s = np.cos(phi), np.sin(phi)
    vx = speed * (c * nx + s * tx)
    vy = speed * (c * ny + s * ty)
    return CollisionSample(r, phi, k, x, y, vx, vy)


def hemisphere_mean_cos(n, rng) -> tuple[float, float]:
    """Mean and standard error of ``cos(phi)`` under the 3D hemisphere collision law."""
    c = np.cos(sample_angles(n, rng, d=3))
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(n))


@dataclass
class Estimate:
    value: float
    stderr: float
    predicted: float
    n: int
    dropped: int = 0

    @property
    def rel_error(self) -> float:
        return abs(self.value - self.predicted) / abs(self.predicted)

    def as_dict(self):
        return {"value": self.value, "stderr": self.stderr, "predicted": self.predicted,
                "rel_error": self.rel_error, "n": self.n, "dropped": self.dropped}


def santalo_prediction(area, perimeter, speed=1.0):
    return math.pi * area / (speed * perimeter)


def mean_free_flight(domain, side=1, Q=1.0, speed=1.0, n=100000, rng=None) -> Estimate:
    """Average flight time from ``nu``-distributed collision points.

    Samples that hit a corner are dropped and counted in ``dropped``.
    """
    if n < 1000:
        raise ValueError("use at least 1000 samples")
    rng = np.random.default_rng() if rng is None else rng
    table = _table(domain, side, Q)
    cs = sample_collision_measure(table, speed=speed, n=n, rng=rng)
    dt, _, _, _, corner = trace_many(table, cs.x, cs.y, cs.vx, cs.vy)
    z = dt[~corner]
    pred = santalo_prediction(table.area(), table.perimeter, speed)
    return Estimate(float(z.mean()), float(z.std(ddof=1) / math.sqrt(len(z))), pred, len(z), int(corner.sum()))


def _follow_to_piece(table: Table, target, x, y, vx, vy, max_bounces):
    """Flight time until each orbit hits piece ``target``; also the hit velocities.

    Orbits that hit a corner or exceed ``max_bounces`` get ``nan``.
    """
    n = len(x)
    total = np.zeros(n)
    hvx, hvy = np.full(n, np.nan), np.full(n, np.nan)
    done = np.zeros(n, dtype=bool)
    alive = np.arange(n)
    X, Y, VX, VY = x.copy(), y.copy(), vx.copy(), vy.copy()
    for _ in range(max_bounces):
        if len(alive) == 0:
            break
        dt, idx, hx, hy, corner = trace_many(table, X, Y, VX, VY)
        total[alive] += dt
        bad = corner
        hit = (idx == target) & ~bad
        a_hit = alive[hit]
        done[a_hit] = True
        hvx[a_hit], hvy[a_hit] = VX[hit], VY[hit]
        total[alive[bad]] = np.nan
        keep = ~(hit | bad)
        nx, ny = normals_many(table, idx[keep], hx[keep], hy[keep])
        vn = VX[keep] * nx + VY[keep] * ny
        VX, VY = VX[keep] - 2.0 * vn * nx, VY[keep] - 2.0 * vn * ny
        X, Y = hx[keep], hy[keep]
        alive = alive[keep]
    total[alive] = np.nan
    total[~done] = np.nan
    return total, hvx, hvy


@dataclass
class InducedStats:
    flight: Estimate
    momentum: Estimate
    returned_momentum: Estimate

    def as_dict(self):
        return {"flight_time": self.flight.as_dict(), "mean_v_perp": self.momentum.as_dict(),
                "mean_v_perp_at_return": self.returned_momentum.as_dict()}


def induced_piston_stats(domain, side=1, Q=1.0, speed=1.0, n=100000, rng=None,
                         max_bounces=10000, min_fraction=0.99) -> InducedStats:
    """Statistics of the map induced on the piston face.

    Starting points are drawn from the collision measure restricted to the
    face; each orbit is followed with the piston frozen until it returns.
    Reports the mean return time (compare ``pi |D| / (|v| ell)``) and the mean
    ``|v_perp|`` at the face (compare ``|v| pi / 4``), both for the starting
    points and at the returns.
    """
    rng = np.random.default_rng() if rng is None else rng
    table = _table(domain, side, Q)
    if table.piston is None:
        raise ValueError("table has no piston face")
    ell = float(table.lengths[table.piston])
    cs = sample_collision_measure(table, speed=speed, n=n, rng=rng, pieces=[table.piston])
    t, hvx, _ = _follow_to_piece(table, table.piston, cs.x, cs.y, cs.vx, cs.vy, max_bounces)
    ok = np.isfinite(t)
    if ok.sum() < min_fraction * n:
        raise NumericalError(f"only {int(ok.sum())} of {n} orbits returned to the piston")
    z = t[ok]
    vp = speed * np.cos(cs.phi)
    ret = np.abs(hvx[ok])
    flight = Estimate(float(z.mean()), float(z.std(ddof=1) / math.sqrt(len(z))),
                      math.pi * table.area() / (speed * ell), len(z), int((~ok).sum()))
    mom_pred = speed * math.pi / 4.0
    momentum = Estimate(float(vp.mean()), float(vp.std(ddof=1) / math.sqrt(n)), mom_pred, n)
    returned = Estimate(float(ret.mean()), float(ret.std(ddof=1) / math.sqrt(len(ret))), mom_pred, len(ret),
                        int((~ok).sum()))
    return InducedStats(flight, momentum, returned)


def inducing_check(domain, side=1, Q=1.0, speed=1.0, n=100000, rng=None, max_bounces=10000) -> dict:
    """Compare the mean induced return time with the mean free flight divided by
    the measure of the piston face.

    The three ingredients are estimated independently; ``residual`` is
    ``|E_hat * nu_face - E_flight| / E_flight``.
    """
    rng = np.random.default_rng() if rng is None else rng
    table = _table(domain, side, Q)
    free = mean_free_flight(table, speed=speed, n=n, rng=rng)
    cs = sample_collision_measure(table, speed=speed, n=n, rng=rng)
    nu_face_mc = float(np.mean(cs.piece == table.piston))
    nu_face = float(table.lengths[table.piston] / table.perimeter)
    induced = induced_piston_stats(table, speed=speed, n=n, rng=rng, max_bounces=max_bounces)
    e_hat = induced.flight.value
    return {"mean_free_flight": free.value, "mean_free_flight_stderr": free.stderr,
            "nu_face": nu_face, "nu_face_mc": nu_face_mc,
            "mean_induced_flight": e_hat, "mean_induced_flight_stderr": induced.flight.stderr,
            "residual": abs(e_hat * nu_face_mc - free.value) / free.value,
            "residual_exact_face": abs(e_hat * nu_face - free.value) / free.value,
            "n": n}


def flux_time_average(domain, side=1, Q=0.5, energy=0.5, n_collisions=100000, rng=None,
                      x0=None, v0=None, max_events=None) -> Estimate:
    """Time-averaged momentum flux ``(1/t) sum |v_perp|`` on a frozen piston.

    A single unit-mass particle of energy ``energy`` is followed until it has
    hit the piston ``n_collisions`` times.  The start is random unless ``x0``
    and ``v0`` are given.  The prediction ``E ell / (2 |D|)`` presumes the
    chamber billiard is ergodic.  ``stderr`` is a batch-means estimate over
    32 blocks.
    """
    rng = np.random.default_rng() if rng is None else rng
    table = _table(domain, side, Q)
    if table.piston is None:
        raise ValueError("table has no piston face")
    speed = math.sqrt(2.0 * energy)
    if x0 is None:
        pts = np.array([p.point_at(f * p.length) for p in table.pieces for f in np.linspace(0.0, 1.0, 17)])
        (xa, ya), (xb, yb) = pts.min(axis=0), pts.max(axis=0)
        while True:
            x, y = rng.uniform(xa, xb), rng.uniform(ya, yb)
            if table.contains(x, y):
                break
    else:
        x, y = map(float, x0)
    if v0 is None:
        th = rng.uniform(0.0, 2.0 * math.pi)
        vx, vy = speed * math.cos(th), speed * math.sin(th)
    else:
        vx, vy = map(float, v0)
        s = math.hypot(vx, vy)
        vx, vy = vx * speed / s, vy * speed / s
    pieces = table.pieces
    target = table.piston
    t = 0.0
    hits = 0
    flux = []
    times = []
    budget = max_events if max_events is not None else 200 * n_collisions
    for _ in range(budget):
        dt, k, hx, hy = table.trace(x, y, vx, vy)
        t += dt
        nx, ny = pieces[k].normal_at(hx, hy)
        if k == target:
            flux.append(abs(vx * nx + vy * ny))
            times.append(t)
            hits += 1
            if hits >= n_collisions:
                break
        vx, vy = reflect(vx, vy, nx, ny)
        x, y = hx, hy
    else:
        raise NumericalError(f"only {hits} piston collisions within {budget} events")
    ell = float(table.lengths[target])
    pred = energy * ell / (2.0 * table.area())
    flux = np.array(flux)
    times = np.array(times)
    value = flux.sum() / t
    nb = 32
    edges = np.linspace(0, len(flux), nb + 1).astype(int)
    tb = np.diff(np.concatenate(([0.0], times[edges[1:] - 1])))
    fb = np.array([flux[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    batch = fb / tb
    return Estimate(float(value), float(batch.std(ddof=1) / math.sqrt(nb)), pred, hits)
