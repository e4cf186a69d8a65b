"""Piecewise smooth billiard containers built from segments and circular arcs.

Boundaries are oriented counterclockwise, so the region lies to the left of
every piece and the inward normal is the tangent rotated by +90 degrees.

An arc is given by its center, radius, start angle and signed sweep.  A
positive sweep runs counterclockwise and bounds the disc's inside (a
focusing wall); a negative sweep bounds the outside (a dispersing wall).

The container consists of the tube ``[0, 1] x [0, ell]`` whose cross-section
is the piston face, plus optional regions attached at ``x = 0`` (left
chamber) and ``x = 1`` (right chamber).  A chain of pieces runs from
``(0, ell)`` to ``(0, 0)`` on the left and from ``(1, 0)`` to ``(1, ell)`` on
the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import NumericalError

CORNER_TOL = 1e-12
GRAZING_TOL = 1e-14


class GeometryError(NumericalError):
    """A ray found no boundary: the container leaks."""


class SingularTrajectory(NumericalError):
    """A trajectory hit a corner or grazed a wall; such orbits are discarded."""


class Segment:
    """Straight piece from ``p0`` to ``p1``."""

    kind = "segment"

    def __init__(self, p0, p1):
        self.p0 = (float(p0[0]), float(p0[1]))
        self.p1 = (float(p1[0]), float(p1[1]))
        dx, dy = self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]
        L = math.sqrt(dx * dx + dy * dy)
        if L == 0:
            raise ValueError("degenerate segment")
        self.length = L
        self.tx, self.ty = dx / L, dy / L
        self.nx, self.ny = -self.ty, self.tx
        # axis-aligned walls get exact snapping of the hit coordinate
        self.vertical = dx == 0.0
        self.horizontal = dy == 0.0

    def __repr__(self):
        return f"Segment({self.p0}, {self.p1})"

    def intersect(self, x, y, vx, vy):
        vn = vx * self.nx + vy * self.ny
        if vn >= 0.0:
            return None
        s = (x - self.p0[0]) * self.nx + (y - self.p0[1]) * self.ny
        dt = (s if s > 0.0 else 0.0) / -vn
        hx, hy = x + dt * vx, y + dt * vy
        if self.vertical:
            hx = self.p0[0]
        elif self.horizontal:
            hy = self.p0[1]
        u = (hx - self.p0[0]) * self.tx + (hy - self.p0[1]) * self.ty
        tol = CORNER_TOL * max(1.0, self.length)
        if -tol <= u <= self.length + tol:
            return dt, hx, hy, u
        return None

    def normal_at(self, hx, hy):
        return self.nx, self.ny

    def point_at(self, s):
        return self.p0[0] + s * self.tx, self.p0[1] + s * self.ty

    def tangent_at(self, s):
        return self.tx, self.ty

    def green(self) -> float:
        """Contribution to ``(1/2) * closed integral of x dy - y dx``."""
        (x0, y0), (x1, y1) = self.p0, self.p1
        return 0.5 * (x0 * y1 - x1 * y0)

    @property
    def start(self):
        return self.p0

    @property
    def end(self):
        return self.p1

    def moved(self, p0=None, p1=None) -> "Segment":
        return Segment(p0 or self.p0, p1 or self.p1)


class Arc:
    """Circular piece of radius ``R`` around ``center`` from angle ``start`` through ``sweep``."""

    kind = "arc"

    def __init__(self, center, R, start, sweep):
        self.c = (float(center[0]), float(center[1]))
        self.R = float(R)
        self.theta0 = float(start)
        self.sweep = float(sweep)
        if self.R <= 0 or self.sweep == 0 or abs(self.sweep) > 2 * math.pi:
            raise ValueError("invalid arc")
        self.length = self.R * abs(self.sweep)
        self.focusing = self.sweep > 0

    def __repr__(self):
        return f"Arc(center={self.c}, R={self.R}, start={self.theta0}, sweep={self.sweep})"

    def _offset(self, theta):
        """Arc length from the start of the piece to angle ``theta``."""
        if self.sweep > 0:
            d = (theta - self.theta0) % (2 * math.pi)
        else:
            d = (self.theta0 - theta) % (2 * math.pi)
        if d > abs(self.sweep) and 2 * math.pi - d < CORNER_TOL:
            d -= 2 * math.pi
        return d * self.R

    def intersect(self, x, y, vx, vy):
        px, py = x - self.c[0], y - self.c[1]
        a = vx * vx + vy * vy
        b = px * vx + py * vy
        c = px * px + py * py - self.R * self.R
        disc = b * b - a * c
        if disc < 0.0:
            return None
        sq = math.sqrt(disc)
        q = -(b + math.copysign(sq, b))
        roots = [q / a, c / q] if q != 0.0 else [0.0]
        best = None
        for t in sorted(roots):
            if t < -1e-12 * math.sqrt(a) or (best is not None):
                continue
            t = max(t, 0.0)
            hx, hy = x + t * vx, y + t * vy
            nx, ny = self.normal_at(hx, hy)
            if vx * nx + vy * ny >= 0.0:
                continue
            u = self._offset(math.atan2(hy - self.c[1], hx - self.c[0]))
            tol = CORNER_TOL * max(1.0, self.length)
            if -tol <= u <= self.length + tol:
                best = (t, hx, hy, u)
        return best

    def normal_at(self, hx, hy):
        dx, dy = (hx - self.c[0]) / self.R, (hy - self.c[1]) / self.R
        return (-dx, -dy) if self.focusing else (dx, dy)

    def point_at(self, s):
        th = self.theta0 + math.copysign(s / self.R, self.sweep)
        return self.c[0] + self.R * math.cos(th), self.c[1] + self.R * math.sin(th)

    def tangent_at(self, s):
        th = self.theta0 + math.copysign(s / self.R, self.sweep)
        sg = 1.0 if self.sweep > 0 else -1.0
        return -sg * math.sin(th), sg * math.cos(th)

    def green(self) -> float:
        cx, cy = self.c
        R, t0 = self.R, self.theta0
        t1 = t0 + self.sweep
        return 0.5 * (R * R * self.sweep + R * cx * (math.sin(t1) - math.sin(t0))
                      - R * cy * (math.cos(t1) - math.cos(t0)))

    @property
    def start(self):
        return self.point_at(0.0)

    @property
    def end(self):
        return self.point_at(self.length)


def reflect(vx, vy, nx, ny):
    """Specular reflection ``v - 2 <v, n> n`` for a unit normal ``n``.

    Raises :class:`SingularTrajectory` for a tangential hit.
    """
    vn = vx * nx + vy * ny
    if abs(vn) < GRAZING_TOL * math.hypot(vx, vy):
        raise SingularTrajectory("grazing collision")
    return vx - 2.0 * vn * nx, vy - 2.0 * vn * ny


def _segments(*pairs):
    """Segments for the given endpoint pairs, skipping zero-length ones."""
    return [Segment(a, b) for a, b in pairs if a != b]


def _tangent_jump(a, b) -> bool:
    ta = a.tangent_at(a.length)
    tb = b.tangent_at(0.0)
    return abs(ta[0] * tb[1] - ta[1] * tb[0]) > 1e-9 or ta[0] * tb[0] + ta[1] * tb[1] < 0


class Table:
    """A closed boundary (one chamber with the piston held fixed).

    ``corner_start[k]``/``corner_end[k]`` flag non-smooth joints at the ends of
    piece ``k``; ``piston`` is the index of the piston face or ``None``.
    """

    def __init__(self, pieces, piston=None, open_ends=()):
        self.pieces = list(pieces)
        self.piston = piston
        n = len(self.pieces)
        self.corner_start = [False] * n
        self.corner_end = [False] * n
        for k in range(n):
            a, b = self.pieces[k], self.pieces[(k + 1) % n]
            if math.dist(a.end, b.start) > 1e-9:
                continue
            jump = _tangent_jump(a, b) or piston in (k, (k + 1) % n)
            self.corner_end[k] = jump
            self.corner_start[(k + 1) % n] = jump
        for k, which in open_ends:
            if which == 0:
                self.corner_start[k] = False
            else:
                self.corner_end[k] = False
        self.lengths = np.array([p.length for p in self.pieces])
        self.perimeter = float(self.lengths.sum())
        self.cum = np.concatenate(([0.0], np.cumsum(self.lengths)))

    def area(self) -> float:
        return math.fsum(p.green() for p in self.pieces)

    def trace(self, x, y, vx, vy, skip=None, allow_escape=False):
        """First boundary hit along the ray: ``(dt, piece index, hx, hy)``.

        With ``allow_escape`` a ray leaving through an open end returns
        ``(inf, -1, nan, nan)`` instead of raising.
        """
        best = None
        for k, p in enumerate(self.pieces):
            if k == skip:
                continue
            hit = p.intersect(x, y, vx, vy)
            if hit is not None and (best is None or hit[0] < best[0]):
                best = (hit[0], k, hit[1], hit[2], hit[3])
        if best is None:
            if allow_escape:
                return math.inf, -1, math.nan, math.nan
            raise GeometryError(f"ray from ({x}, {y}) along ({vx}, {vy}) leaves the container")
        dt, k, hx, hy, u = best
        p = self.pieces[k]
        if (u < CORNER_TOL and self.corner_start[k]) or (p.length - u < CORNER_TOL and self.corner_end[k]):
            raise SingularTrajectory(f"corner hit at ({hx}, {hy})")
        return dt, k, hx, hy

    def locate(self, r):
        """Piece index and offset of boundary arc-length coordinate ``r``."""
        k = int(np.searchsorted(self.cum, r, side="right") - 1)
        k = min(max(k, 0), len(self.pieces) - 1)
        return k, r - self.cum[k]

    def contains(self, x, y) -> bool:
        """Crossing-number test with a ray towards +x."""
        count = 0
        for p in self.pieces:
            if p.kind == "segment":
                (x0, y0), (x1, y1) = p.p0, p.p1
                if (y0 > y) != (y1 > y):
                    xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                    if xc > x:
                        count += 1
            else:
                dy = y - p.c[1]
                if abs(dy) >= p.R:
                    continue
                dx = math.sqrt(p.R * p.R - dy * dy)
                for xc in (p.c[0] - dx, p.c[0] + dx):
                    if xc > x:
                        u = p._offset(math.atan2(dy, xc - p.c[0]))
                        if 0.0 < u < p.length:
                            count += 1
        return count % 2 == 1


# Vectorised tracing for Monte Carlo estimates ------------------------------------

def _segment_many(p: Segment, X, Y, VX, VY):
    vn = VX * p.nx + VY * p.ny
    s = (X - p.p0[0]) * p.nx + (Y - p.p0[1]) * p.ny
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.maximum(s, 0.0) / -vn
    hx, hy = X + dt * VX, Y + dt * VY
    u = (hx - p.p0[0]) * p.tx + (hy - p.p0[1]) * p.ty
    tol = CORNER_TOL * max(1.0, p.length)
    ok = (vn < 0) & (u >= -tol) & (u <= p.length + tol)
    return np.where(ok, dt, np.inf), u


def _arc_many(p: Arc, X, Y, VX, VY):
    px, py = X - p.c[0], Y - p.c[1]
    a = VX * VX + VY * VY
    b = px * VX + py * VY
    c = px * px + py * py - p.R * p.R
    disc = b * b - a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        q = -(b + np.copysign(sq, b))
        r1, r2 = q / a, c / q
    lo, hi = np.fmin(r1, r2), np.fmax(r1, r2)
    best_t = np.full(X.shape, np.inf)
    best_u = np.zeros(X.shape)
    sg = 1.0 if p.focusing else -1.0
    tol = CORNER_TOL * max(1.0, p.length)
    for t in (hi, lo):  # the smaller root overwrites when valid
        tt = np.maximum(t, 0.0)
        hx, hy = X + tt * VX, Y + tt * VY
        nx, ny = -sg * (hx - p.c[0]) / p.R, -sg * (hy - p.c[1]) / p.R
        th = np.arctan2(hy - p.c[1], hx - p.c[0])
        d = ((th - p.theta0) if p.sweep > 0 else (p.theta0 - th)) % (2 * np.pi)
        d = np.where((d > abs(p.sweep)) & (2 * np.pi - d < CORNER_TOL), d - 2 * np.pi, d)
        u = d * p.R
        ok = np.isfinite(t) & (t >= -1e-12 * np.sqrt(a)) & (VX * nx + VY * ny < 0) & (u >= -tol) & (u <= p.length + tol)
        best_t = np.where(ok, tt, best_t)
        best_u = np.where(ok, u, best_u)
    return best_t, best_u


def trace_many(table: Table, X, Y, VX, VY):
    """Vectorised :meth:`Table.trace`; corner hits are flagged rather than raised.

    Returns ``(dt, piece, hx, hy, corner)``.
    """
    n = len(X)
    best = np.full(n, np.inf)
    idx = np.full(n, -1)
    uu = np.zeros(n)
    for k, p in enumerate(table.pieces):
        t, u = (_segment_many if p.kind == "segment" else _arc_many)(p, X, Y, VX, VY)
        better = t < best
        best = np.where(better, t, best)
        idx = np.where(better, k, idx)
        uu = np.where(better, u, uu)
    if np.any(idx < 0):
        raise GeometryError("some rays leave the container")
    hx, hy = X + best * VX, Y + best * VY
    L = table.lengths[idx]
    cs = np.array(table.corner_start)[idx]
    ce = np.array(table.corner_end)[idx]
    corner = ((uu < CORNER_TOL) & cs) | ((L - uu < CORNER_TOL) & ce)
    return best, idx, hx, hy, corner


def normals_many(table: Table, idx, hx, hy):
    nx = np.empty(len(idx))
    ny = np.empty(len(idx))
    for k, p in enumerate(table.pieces):
        sel = idx == k
        if not np.any(sel):
            continue
        if p.kind == "segment":
            nx[sel], ny[sel] = p.nx, p.ny
        else:
            sg = 1.0 if p.focusing else -1.0
            nx[sel] = -sg * (hx[sel] - p.c[0]) / p.R
            ny[sel] = -sg * (hy[sel] - p.c[1]) / p.R
    return nx, ny


# Container ----------------------------------------------------------------------

class BilliardDomain:
    """Two-chamber container: tube ``[0, 1] x [0, ell]`` plus attached end regions.

    ``left_chain`` runs from ``(0, ell)`` to ``(0, 0)``; ``right_chain`` from
    ``(1, 0)`` to ``(1, ell)``.  Horizontal end pieces that continue the tube
    walls are merged with them so that no false corner appears at ``x = 0``
    or ``x = 1``.
    """

    def __init__(self, left_chain, right_chain, ell=1.0, name="custom"):
        self.ell = float(ell)
        self.name = name
        self.left_chain = list(left_chain)
        self.right_chain = list(right_chain)
        self._check_chain(self.left_chain, (0.0, self.ell), (0.0, 0.0))
        self._check_chain(self.right_chain, (1.0, 0.0), (1.0, self.ell))
        self._static = [self._build(1, None), self._build(2, None)]
        # areas at the degenerate piston positions, then extended affinely in Q
        self.A1 = self.table(1, 0.0).area()
        self.A2 = self.table(2, 1.0).area()
        if self.A1 < -1e-12 or self.A2 < -1e-12:
            raise ValueError("end regions must have non-negative area (check orientation)")
        for side, Q in ((1, 1.0), (2, 0.0), (1, 0.5), (2, 0.5)):
            if abs(self.table(side, Q).area() - self.area(side, Q)) > 1e-9:
                raise ValueError("chamber area is not affine in Q; boundary is inconsistent")

    @staticmethod
    def _check_chain(chain, a, b):
        if not chain:
            raise ValueError("empty boundary chain")
        if math.dist(chain[0].start, a) > 1e-9 or math.dist(chain[-1].end, b) > 1e-9:
            raise ValueError(f"chain must run from {a} to {b}")
        for p, q in zip(chain, chain[1:]):
            if math.dist(p.end, q.start) > 1e-9:
                raise ValueError("boundary chain is not connected")

    def _build(self, side, Q):
        """Pieces of one chamber; ``Q=None`` gives the engine's static walls,
        where the tube walls span the whole tube and the piston is omitted."""
        ell = self.ell
        if side == 1:
            chain = list(self.left_chain)
            xr = 1.0 if Q is None else Q
            x_top, x_bot = 0.0, 0.0
            if chain and chain[0].kind == "segment" and chain[0].horizontal and chain[0].p0[1] == ell \
                    and chain[0].p1[0] < chain[0].p0[0]:
                x_top = chain.pop(0).p1[0]
            if chain and chain[-1].kind == "segment" and chain[-1].horizontal and chain[-1].p1[1] == 0.0 \
                    and chain[-1].p1[0] > chain[-1].p0[0]:
                x_bot = chain.pop().p0[0]
            if Q is None:
                bottom, top = _segments(((x_bot, 0.0), (xr, 0.0)), ((xr, ell), (x_top, ell)))
                return Table([bottom, top] + chain, None, open_ends=((0, 1), (1, 0)))
            pieces = _segments(((x_bot, 0.0), (Q, 0.0)))
            face = len(pieces)
            pieces += _segments(((Q, 0.0), (Q, ell)), ((Q, ell), (x_top, ell)))
            return Table(pieces + chain, piston=face)
        chain = list(self.right_chain)
        xl = 0.0 if Q is None else Q
        x_top, x_bot = 1.0, 1.0
        if chain and chain[0].kind == "segment" and chain[0].horizontal and chain[0].p0[1] == 0.0 \
                and chain[0].p1[0] > chain[0].p0[0]:
            x_bot = chain.pop(0).p1[0]
        if chain and chain[-1].kind == "segment" and chain[-1].horizontal and chain[-1].p1[1] == ell \
                and chain[-1].p1[0] < chain[-1].p0[0]:
            x_top = chain.pop().p0[0]
        if Q is None:
            bottom, top = _segments(((xl, 0.0), (x_bot, 0.0)), ((x_top, ell), (xl, ell)))
            return Table([bottom] + chain + [top], None, open_ends=((0, 0), (len(chain) + 1, 1)))
        pieces = _segments(((Q, ell), (Q, 0.0)), ((Q, 0.0), (x_bot, 0.0)))
        tail = _segments(((x_top, ell), (Q, ell)))
        return Table(pieces + chain + tail, piston=0)

    def table(self, side: int, Q: float) -> Table:
        """Closed boundary of chamber ``side`` (1 left, 2 right) with the piston at ``Q``."""
        if not 0.0 <= Q <= 1.0:
            raise ValueError("Q must lie in [0, 1]")
        return self._build(side, Q)

    def static(self, side: int) -> Table:
        return self._static[side - 1]

    def area(self, side: int, Q: float) -> float:
        """Chamber area, affine in ``Q``."""
        return self.A1 + self.ell * Q if side == 1 else self.A2 + self.ell * (1.0 - Q)

    def perimeter(self, side: int, Q: float) -> float:
        return self.table(side, Q).perimeter

    def contains(self, side, Q, x, y) -> bool:
        return self.table(side, Q).contains(x, y)

    def bounding_box(self, side, Q):
        pts = []
        for p in self.table(side, Q).pieces:
            if p.kind == "segment":
                pts += [p.p0, p.p1]
            else:
                pts += [p.point_at(s) for s in np.linspace(0.0, p.length, 65)]
        pts = np.array(pts)
        return pts.min(axis=0), pts.max(axis=0)


# Presets -------------------------------------------------------------------------

def box(ell=1.0) -> BilliardDomain:
    """Both chambers are rectangles: walls at ``x = 0`` and ``x = 1``."""
    return BilliardDomain([Segment((0.0, ell), (0.0, 0.0))], [Segment((1.0, 0.0), (1.0, ell))], ell, "box")


def sinai(ell=1.0, depth=0.5, bulge=0.25) -> BilliardDomain:
    """Rectangular end regions of width ``depth`` whose far wall is a circular
    scatterer bulging ``bulge`` into the chamber (a dispersing wall)."""
    h = 0.5 * ell
    # circle through the far corners whose apex sits `bulge` inside the region
    R = (h * h + bulge * bulge) / (2.0 * bulge)
    off = R - bulge
    half = math.atan2(h, off)
    xl = -depth
    left = [Segment((0.0, ell), (xl, ell)),
            Arc((xl - off, h), R, half, -2.0 * half),
            Segment((xl, 0.0), (0.0, 0.0))]
    xr = 1.0 + depth
    right = [Segment((1.0, 0.0), (xr, 0.0)),
             Arc((xr + off, h), R, math.pi + half, -2.0 * half),
             Segment((xr, ell), (1.0, ell))]
    return BilliardDomain(left, right, ell, "sinai")


def stadium_ends(ell=1.0) -> BilliardDomain:
    """Semicircular chamber ends of radius ``ell / 2`` (focusing walls)."""
    h = 0.5 * ell
    left = [Arc((0.0, h), h, 0.5 * math.pi, math.pi)]
    right = [Arc((1.0, h), h, -0.5 * math.pi, math.pi)]
    return BilliardDomain(left, right, ell, "stadium-ends")


PRESETS = {"box": box, "sinai": sinai, "stadium-ends": stadium_ends}


def _reversed(p):
    if p.kind == "segment":
        return Segment(p.p1, p.p0)
    return Arc(p.c, p.R, p.theta0 + p.sweep, -p.sweep)


def _chain(pieces, start, stop):
    """Order and orient ``pieces`` into a connected chain from ``start`` to ``stop``."""
    pool = list(pieces)
    out, at = [], tuple(start)
    while pool:
        for k, p in enumerate(pool):
            if math.dist(p.start, at) < 1e-9:
                break
            if math.dist(p.end, at) < 1e-9:
                p = _reversed(p)
                break
        else:
            raise ValueError(f"boundary pieces do not connect at {at}")
        pool.pop(k)
        out.append(p)
        at = p.end
    if math.dist(at, stop) > 1e-9:
        raise ValueError(f"boundary chain ends at {at}, expected {stop}")
    return out


def get_domain(name_or_spec, **kw) -> BilliardDomain:
    """Domain from a preset name or a JSON-style boundary description.

    Two dict layouts are accepted.  ``{"ell", "left": [...], "right": [...]}``
    gives the end chains directly, with entries
    ``{"segment": [[x0, y0], [x1, y1]]}`` or
    ``{"arc": {"center": [cx, cy], "R": r, "start": a, "sweep": s}}``.
    ``{"ell", "segments": [[[x0, y0], [x1, y1]], ...], "arcs": [{...}, ...]}``
    lists pieces in any order and orientation; pieces left of the tube
    (midpoint ``x < 0.5``) form the left end, the rest the right end.
    """
    if isinstance(name_or_spec, BilliardDomain):
        return name_or_spec
    if isinstance(name_or_spec, str):
        try:
            return PRESETS[name_or_spec](**kw)
        except KeyError:
            raise ValueError(f"unknown preset {name_or_spec!r}; choose from {sorted(PRESETS)}") from None
    spec = dict(name_or_spec)
    ell = float(spec.get("ell", 1.0))
    name = spec.get("name", "custom")

    def piece(d):
        if "segment" in d:
            return Segment(*d["segment"])
        a = d["arc"]
        return Arc(a["center"], a["R"], a["start"], a["sweep"])

    if "left" in spec or "right" in spec:
        return BilliardDomain([piece(d) for d in spec["left"]], [piece(d) for d in spec["right"]], ell, name)
    pieces = [Segment(*sg) for sg in spec.get("segments", [])]
    pieces += [Arc(a["center"], a["R"], a["start"], a["sweep"]) for a in spec.get("arcs", [])]
    if not pieces:
        raise ValueError("domain description has no boundary pieces")
    left = [p for p in pieces if p.point_at(0.5 * p.length)[0] < 0.5]
    right = [p for p in pieces if p.point_at(0.5 * p.length)[0] >= 0.5]
    return BilliardDomain(_chain(left, (0.0, ell), (0.0, 0.0)), _chain(right, (1.0, 0.0), (1.0, ell)), ell, name)
