"""Slow variables, trajectories and deviation metrics shared by every engine.

The slow variables of a piston system are the piston position ``Q``, the
rescaled piston velocity ``W = V / eps`` and one energy per gas particle.
With ``eps = M**-0.5`` they are conserved when the piston is infinitely heavy
and drift on the slow time scale ``tau = eps * t`` otherwise.

A :class:`Trajectory` stores samples of these variables as a dense array so
that actual (simulated) and averaged motions can be compared cheaply.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class PistonError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PistonError, ValueError):
    """Invalid user-supplied configuration."""


class NumericalError(PistonError, RuntimeError):
    """A simulation or integration failed a numerical safety check."""


@dataclass(frozen=True)
class MassProfile:
    """Piston mass and gas particle masses.

    ``M`` may be ``math.inf`` for a frozen piston, in which case ``eps == 0``.
    """

    M: float
    left: tuple[float, ...] = (1.0,)
    right: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError(f"piston mass must be positive, got {self.M}")
        object.__setattr__(self, "left", tuple(float(m) for m in self.left))
        object.__setattr__(self, "right", tuple(float(m) for m in self.right))
        for m in self.left + self.right:
            if not m > 0 or not math.isfinite(m):
                raise ValueError(f"gas masses must be positive and finite, got {m}")

    @classmethod
    def from_eps(cls, eps, left=(1.0,), right=(1.0,)):
        if eps < 0:
            raise ValueError("eps must be non-negative")
        M = math.inf if eps == 0 else 1.0 / (eps * eps)
        return cls(M, tuple(left), tuple(right))

    @property
    def eps(self) -> float:
        return 0.0 if math.isinf(self.M) else 1.0 / math.sqrt(self.M)


@dataclass(frozen=True)
class SlowState:
    """``h = (Q, W, E_1j, E_2j)`` for a single-piston system of dimension ``dim``."""

    Q: float
    W: float
    left: tuple[float, ...]
    right: tuple[float, ...]
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(float(e) for e in self.left))
        object.__setattr__(self, "right", tuple(float(e) for e in self.right))
        if not 0.0 <= self.Q <= 1.0:
            raise ValueError(f"Q must lie in [0, 1], got {self.Q}")
        if any(e < 0 for e in self.left + self.right):
            raise ValueError("particle energies must be non-negative")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")

    @property
    def counts(self) -> tuple[int, int]:
        return (len(self.left), len(self.right))

    @property
    def total_left(self) -> float:
        return math.fsum(self.left)

    @property
    def total_right(self) -> float:
        return math.fsum(self.right)

    def as_array(self) -> np.ndarray:
        return np.array((self.Q, self.W) + self.left + self.right, dtype=float)

    @classmethod
    def from_array(cls, arr, n_left: int, dim: int = 1) -> "SlowState":
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0]), float(arr[1]), tuple(arr[2:2 + n_left]),
                   tuple(arr[2 + n_left:]), dim)

    def speeds(self, masses: MassProfile) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Particle speeds ``s = sqrt(2E/m)`` (the hard-core 1D coordinates)."""
        self._check_masses(masses)
        sl = tuple(math.sqrt(2.0 * e / m) for e, m in zip(self.left, masses.left))
        sr = tuple(math.sqrt(2.0 * e / m) for e, m in zip(self.right, masses.right))
        return sl, sr

    @classmethod
    def from_speeds(cls, Q, W, s_left, s_right, masses: MassProfile, dim=1):
        el = tuple(0.5 * m * s * s for s, m in zip(s_left, masses.left))
        er = tuple(0.5 * m * s * s for s, m in zip(s_right, masses.right))
        return cls(Q, W, el, er, dim)

    def _check_masses(self, masses):
        if (len(masses.left), len(masses.right)) != self.counts:
            raise ValueError("mass profile does not match particle counts")


@dataclass(frozen=True)
class NPistonState:
    """Slow variables of the multi-piston 1D system.

    ``Q`` and ``W`` have one entry per piston, ``energies`` one tuple per chamber.
    """

    Q: tuple[float, ...]
    W: tuple[float, ...]
    energies: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "Q", tuple(float(x) for x in self.Q))
        object.__setattr__(self, "W", tuple(float(x) for x in self.W))
        object.__setattr__(self, "energies",
                           tuple(tuple(float(e) for e in ch) for ch in self.energies))
        if len(self.W) != len(self.Q) or len(self.energies) != len(self.Q) + 1:
            raise ValueError("need N-1 pistons and N chambers")
        if any(b <= a for a, b in zip((0.0,) + self.Q, self.Q + (1.0,))):
            raise ValueError("piston positions must be strictly ordered inside (0, 1)")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(ch) for ch in self.energies)

    def as_array(self) -> np.ndarray:
        flat = [e for ch in self.energies for e in ch]
        return np.array(self.Q + self.W + tuple(flat), dtype=float)

    @classmethod
    def from_array(cls, arr, counts: Sequence[int]) -> "NPistonState":
        arr = np.asarray(arr, dtype=float)
        p = len(counts) - 1
        energies, k = [], 2 * p
        for n in counts:
            energies.append(tuple(arr[k:k + n]))
            k += n
        return cls(tuple(arr[:p]), tuple(arr[p:2 * p]), tuple(energies))


@dataclass(frozen=True)
class Window:
    """Compact set of admissible slow states; leaving it stops a comparison."""

    Qmin: float
    Qmax: float
    Wbound: float
    Emin: float | tuple[float, ...]
    Emax: float | tuple[float, ...]

    def __post_init__(self):
        if not 0.0 < self.Qmin < self.Qmax < 1.0:
            raise ValueError("need 0 < Qmin < Qmax < 1")
        if not self.Wbound > 0:
            raise ValueError("Wbound must be positive")
        lo, hi = np.atleast_1d(self.Emin), np.atleast_1d(self.Emax)
        if np.any(lo <= 0) or np.any(hi <= lo):
            raise ValueError("need 0 < Emin < Emax")

    def contains_rows(self, data: np.ndarray, n_pistons: int = 1) -> np.ndarray:
        """Boolean mask over rows of a trajectory data array."""
        data = np.atleast_2d(data)
        p = n_pistons
        Q, W, E = data[:, :p], data[:, p:2 * p], data[:, 2 * p:]
        ok = np.all((Q >= self.Qmin) & (Q <= self.Qmax), axis=1)
        ok &= np.all(np.abs(W) <= self.Wbound, axis=1)
        if E.shape[1]:
            ok &= np.all((E >= np.asarray(self.Emin)) & (E <= np.asarray(self.Emax)), axis=1)
        return ok

    def contains(self, h: SlowState | NPistonState) -> bool:
        p = len(h.Q) if isinstance(h, NPistonState) else 1
        return bool(self.contains_rows(h.as_array()[None, :], p)[0])


@dataclass
class Trajectory:
    """Time-stamped slow-variable samples.

    ``data`` has one row per sample with columns ``Q_i..., W_i..., E_cj...``;
    ``counts`` gives the number of gas particles per chamber, so a single
    piston system has ``counts == (n1, n2)``.  ``extra`` holds additional
    named columns (for instance the effective Hamiltonian).
    """

    tau: np.ndarray
    data: np.ndarray
    counts: tuple[int, ...]
    source: str = "actual"
    seed: int | None = None
    eps: float = float("nan")
    delta: float = 0.0
    dim: int = 1
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        self.counts = tuple(int(n) for n in self.counts)
        if self.tau.ndim != 1 or self.data.shape[0] != self.tau.size:
            raise ValueError("tau and data row counts differ")
        if self.tau.size and self.data.shape[1] != self.width:
            raise ValueError(f"expected {self.width} columns, got {self.data.shape[1]}")
        if self.tau.size > 1 and np.any(np.diff(self.tau) <= 0):
            raise ValueError("tau must be strictly increasing")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("trajectory contains non-finite states")

    @property
    def n_pistons(self) -> int:
        return len(self.counts) - 1

    @property
    def width(self) -> int:
        return 2 * self.n_pistons + sum(self.counts)

    def __len__(self):
        return self.tau.size

    def state(self, i: int) -> SlowState | NPistonState:
        if self.n_pistons == 1:
            return SlowState.from_array(self.data[i], self.counts[0], self.dim)
        return NPistonState.from_array(self.data[i], self.counts)

    def column_names(self) -> list[str]:
        p = self.n_pistons
        if p == 1:
            names = ["Q", "W"]
        else:
            names = [f"Q{i + 1}" for i in range(p)] + [f"W{i + 1}" for i in range(p)]
        for c, n in enumerate(self.counts):
            names += [f"E{c + 1}_{j + 1}" for j in range(n)]
        return names

    def column(self, name: str) -> np.ndarray:
        if name in self.extra:
            return self.extra[name]
        return self.data[:, self.column_names().index(name)]

    def interpolate(self, tau) -> np.ndarray:
        """Linear interpolation of every slow variable at the given slow times."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.column_stack([np.interp(tau, self.tau, col) for col in self.data.T])


def slow_projection(full_state, **kwargs) -> SlowState:
    """Project a full phase-space state onto its slow variables.

    Works with any state object exposing ``slow_state()`` (the hard-core,
    soft-core and billiard states of this package).
    """
    return full_state.slow_state(**kwargs)


def stopping_time(traj: Trajectory, window: Window) -> float:
    """First sampled slow time at which ``traj`` is outside ``window`` (``inf`` if never)."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    inside = window.contains_rows(traj.data, traj.n_pistons)
    out = np.flatnonzero(~inside)
    return float(traj.tau[out[0]]) if out.size else math.inf


def sup_deviation(actual: Trajectory, averaged: Trajectory, tau_end: float) -> float:
    """Sup over ``[0, tau_end]`` of the max-norm distance between two trajectories.

    Both trajectories are linearly interpolated onto the union of their
    sample times inside the interval.
    """
    if actual.counts != averaged.counts:
        raise ValueError(f"particle counts differ: {actual.counts} vs {averaged.counts}")
    if tau_end < 0:
        raise ValueError("tau_end must be non-negative")
    tol = 1e-9 * max(1.0, tau_end)
    for tr in (actual, averaged):
        if len(tr) == 0 or tr.tau[0] > tol or tr.tau[-1] < tau_end - tol:
            raise ValueError("trajectory does not cover [0, tau_end]")
    grid = np.union1d(actual.tau, averaged.tau)
    grid = grid[grid <= tau_end + tol]
    diff = actual.interpolate(grid) - averaged.interpolate(grid)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


# CSV persistence -----------------------------------------------------------

def write_csv(traj: Trajectory, dest) -> None:
    """Write ``tau`` plus every slow-variable column (and extras) with a header row.

    ``repr`` of a Python float round-trips exactly, independent of locale.
    """
    names = ["tau"] + traj.column_names() + list(traj.extra)
    cols = [traj.tau] + list(traj.data.T) + [np.asarray(v, dtype=float) for v in traj.extra.values()]
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])
    finally:
        if own:
            fh.close()


def read_csv(src, counts: Sequence[int] | None = None, **meta) -> Trajectory:
    """Inverse of :func:`write_csv`.  Particle counts are inferred from the header."""
    own = isinstance(src, (str, os.PathLike))
    fh = open(src, newline="") if own else io.StringIO(src.read())
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    header, body = rows[0], rows[1:]
    if header[0] != "tau":
        raise ValueError("first column must be tau")
    e_cols = [h for h in header if h.startswith("E") and "_" in h]
    if counts is None:
        chambers: dict[int, int] = {}
        for h in e_cols:
            c = int(h[1:h.index("_")])
            chambers[c] = chambers.get(c, 0) + 1
        counts = tuple(chambers[c] for c in sorted(chambers))
    arr = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    p = len(counts) - 1
    width = 2 * p + sum(counts)
    extra = {h: arr[:, 1 + width + k] for k, h in enumerate(header[1 + width:])}
    return Trajectory(arr[:, 0], arr[:, 1:1 + width], tuple(counts), extra=extra, **meta)


def fast_grid(t_end: float, dt: float) -> Iterable[float]:
    """Sample times ``k * dt`` for ``k = 0, 1, ...`` not exceeding ``t_end``."""
    if dt <= 0:
        raise ValueError("sampling step must be positive")
    n = int(math.floor(t_end / dt * (1 + 1e-12) + 1e-9))
    return (k * dt for k in range(n + 1))
