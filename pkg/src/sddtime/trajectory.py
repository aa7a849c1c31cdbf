"""Piecewise cubic-Hermite trajectories and monotone inversion.

Every function-valued object in the package (histories, solutions, the
deviating argument, the time map) is a :class:`Trajectory`: a list of
contiguous segments, each carrying values and one-sided derivatives at both
ends. Values are continuous by construction; derivatives may jump at joins,
and the convention is to return the right-hand derivative there unless
``side="left"`` is requested.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketInvalid, NoConvergence, NonMonotone, OutOfDomain

INVERSION_TOL = 1e-12
MAX_INVERSION_ITER = 200


def _hermite_basis(theta):
    t2 = theta * theta
    t3 = t2 * theta
    return 2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + theta, -2 * t3 + 3 * t2, t3 - t2


def _hermite_basis_prime(theta):
    t2 = theta * theta
    return 6 * t2 - 6 * theta, 3 * t2 - 4 * theta + 1, -6 * t2 + 6 * theta, 3 * t2 - 2 * theta


class Trajectory:
    """Dense-output C^0 piecewise cubic with per-segment end derivatives.

    Parameters
    ----------
    t : array, shape (n + 1,)
        Strictly increasing node times.
    y : array, shape (n + 1, m)
        Values at the nodes.
    d_lo, d_hi : array, shape (n, m)
        Derivative at the left and right end of each segment.
    """

    def __init__(self, t, y, d_lo, d_hi):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        d_lo = np.asarray(d_lo, dtype=float).reshape(len(t) - 1, y.shape[1])
        d_hi = np.asarray(d_hi, dtype=float).reshape(len(t) - 1, y.shape[1])
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a trajectory needs at least one segment")
        if y.shape[0] != len(t):
            raise ValueError("y must have one row per node")
        if not np.all(np.diff(t) > 0):
            raise ValueError("node times must be strictly increasing")
        self.t = t
        self.y = y
        self.d_lo = d_lo
        self.d_hi = d_hi
        for arr in (self.t, self.y, self.d_lo, self.d_hi):
            arr.setflags(write=False)
        self._tlist = t.tolist()
        self._slack = 1e-12 * max(1.0, abs(t[0]), abs(t[-1]))

    # construction helpers

    @classmethod
    def from_nodes(cls, t, y, dy) -> "Trajectory":
        """Build from node values and a single (continuous) derivative per node."""
        y = np.asarray(y, dtype=float)
        dy = np.asarray(dy, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
            dy = dy[:, None]
        return cls(t, y, dy[:-1], dy[1:])

    @classmethod
    def constant(cls, value, t_min: float, t_max: float) -> "Trajectory":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        y = np.vstack([value, value])
        zero = np.zeros((1, len(value)))
        return cls([t_min, t_max], y, zero, zero)

    @classmethod
    def from_function(cls, fun: Callable, dfun: Callable, grid: Sequence[float]) -> "Trajectory":
        """Sample ``fun`` and its derivative ``dfun`` on ``grid``."""
        grid = np.asarray(grid, dtype=float)
        y = np.array([np.atleast_1d(fun(s)) for s in grid], dtype=float)
        dy = np.array([np.atleast_1d(dfun(s)) for s in grid], dtype=float)
        return cls.from_nodes(grid, y, dy)

    @classmethod
    def concatenate(cls, parts: Sequence["Trajectory"]) -> "Trajectory":
        """Join trajectories whose domains touch end to start."""
        t = [parts[0].t]
        y = [parts[0].y]
        for prev, nxt in zip(parts[:-1], parts[1:]):
            if nxt.t[0] != prev.t[-1]:
                raise ValueError("trajectories must share their join node")
            t.append(nxt.t[1:])
            y.append(nxt.y[1:])
        return cls(
            np.concatenate(t),
            np.vstack(y),
            np.vstack([p.d_lo for p in parts]),
            np.vstack([p.d_hi for p in parts]),
        )

    # basic properties

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    @property
    def t_min(self) -> float:
        return float(self.t[0])

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    @property
    def n_segments(self) -> int:
        return len(self.t) - 1

    def __repr__(self):
        return f"Trajectory(dim={self.dim}, domain={self.domain}, segments={self.n_segments})"

    # evaluation

    def _check(self, x):
        lo, hi = self.t[0], self.t[-1]
        if np.any(x < lo - self._slack) or np.any(x > hi + self._slack):
            raise OutOfDomain(f"t={x} outside trajectory domain [{lo}, {hi}]")
        return np.clip(x, lo, hi)

    def _locate(self, x, side):
        n = len(self.t) - 1
        if np.ndim(x) == 0:
            if side == "right":
                i = bisect_right(self._tlist, x) - 1
            else:
                i = bisect_left(self._tlist, x) - 1
            return min(max(i, 0), n - 1)
        i = np.searchsorted(self.t, x, side=side) - 1
        return np.clip(i, 0, n - 1)

    def _pieces(self, t, side):
        x = self._check(np.asarray(t, dtype=float))
        i = self._locate(float(x) if x.ndim == 0 else x, side)
        a = self.t[i]
        step = self.t[i + 1] - a
        theta = (x - a) / step
        return i, theta, step

    def eval(self, t, side: str = "right") -> np.ndarray:
        """Value at ``t``: shape (m,) for scalar ``t``, (k, m) for arrays."""
        i, theta, step = self._pieces(t, side)
        h00, h10, h01, h11 = _hermite_basis(theta)
        if np.ndim(theta) == 0:
            return (h00 * self.y[i] + h10 * step * self.d_lo[i]
                    + h01 * self.y[i + 1] + h11 * step * self.d_hi[i])
        col = np.newaxis
        return (h00[:, col] * self.y[i] + (h10 * step)[:, col] * self.d_lo[i]
                + h01[:, col] * self.y[i + 1] + (h11 * step)[:, col] * self.d_hi[i])

    __call__ = eval

    def eval_derivative(self, t, side: str = "right") -> np.ndarray:
        """Derivative of the interpolant; right-hand value at joins by default."""
        i, theta, step = self._pieces(t, side)
        g00, g10, g01, g11 = _hermite_basis_prime(theta)
        if np.ndim(theta) == 0:
            return ((g00 * self.y[i] + g01 * self.y[i + 1]) / step
                    + g10 * self.d_lo[i] + g11 * self.d_hi[i])
        col = np.newaxis
        return ((g00[:, col] * self.y[i] + g01[:, col] * self.y[i + 1]) / step[:, col]
                + g10[:, col] * self.d_lo[i] + g11[:, col] * self.d_hi[i])

    def restrict(self, t_lo: float, t_hi: float) -> "Trajectory":
        """Copy of the segments between two existing nodes."""
        i0 = int(np.searchsorted(self.t, t_lo - self._slack))
        i1 = int(np.searchsorted(self.t, t_hi + self._slack, side="right")) - 1
        if i1 <= i0 or abs(self.t[i0] - t_lo) > self._slack or abs(self.t[i1] - t_hi) > self._slack:
            raise OutOfDomain(f"[{t_lo}, {t_hi}] does not start and end on nodes")
        return Trajectory(self.t[i0:i1 + 1], self.y[i0:i1 + 1], self.d_lo[i0:i1], self.d_hi[i0:i1])

    def node_derivatives(self) -> np.ndarray:
        """All one-sided node derivatives stacked, shape (2n, m)."""
        return np.vstack([self.d_lo, self.d_hi])


def integrate_ode(rhs: Callable, t_span: tuple[float, float], y0, dt: float) -> Trajectory:
    """Classical fixed-step RK4 for ``y' = rhs(t, y)`` with Hermite dense output."""
    t_start, t_end = t_span
    n = int(np.ceil((t_end - t_start) / dt - 1e-9))
    ts = t_start + dt * np.arange(n + 1)
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    ys = [y]
    ds = [np.atleast_1d(rhs(ts[0], y))]
    for k in range(n):
        t = ts[k]
        k1 = ds[-1]
        k2 = np.atleast_1d(rhs(t + dt / 2, y + dt / 2 * k1))
        k3 = np.atleast_1d(rhs(t + dt / 2, y + dt / 2 * k2))
        k4 = np.atleast_1d(rhs(t + dt, y + dt * k3))
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys.append(y)
        ds.append(np.atleast_1d(rhs(ts[k + 1], y)))
    return Trajectory.from_nodes(ts, np.array(ys), np.array(ds))


@dataclass(frozen=True)
class MonotoneFn:
    """Scalar trajectory with a certified positive lower bound on its slope."""

    underlying: Trajectory
    slope_floor: float
    tol: float = 1e-6

    def __post_init__(self):
        if self.underlying.dim != 1:
            raise ValueError("a monotone function must be scalar")
        if not self.slope_floor > 0:
            raise NonMonotone(f"slope floor must be positive, got {self.slope_floor}")
        worst = float(self.underlying.node_derivatives().min())
        if worst < self.slope_floor - self.tol:
            raise NonMonotone(f"node slope {worst} below floor {self.slope_floor}")

    @property
    def domain(self) -> tuple[float, float]:
        return self.underlying.domain

    def __call__(self, t, side: str = "right"):
        v = self.underlying.eval(t, side)
        return float(v[0]) if np.ndim(t) == 0 else v[:, 0]

    def derivative(self, t, side: str = "right"):
        v = self.underlying.eval_derivative(t, side)
        return float(v[0]) if np.ndim(t) == 0 else v[:, 0]

    def min_slope(self, n: int = 10_001) -> float:
        """Smallest derivative on the nodes and an ``n``-point uniform grid."""
        grid = np.linspace(*self.domain, n)
        return float(min(self.derivative(grid).min(), self.underlying.node_derivatives().min()))


def invert_monotone(fn: MonotoneFn, target, bracket, tol: float = INVERSION_TOL,
                    max_iter: int = MAX_INVERSION_ITER):
    """Solve ``fn(t) = target`` for ``t`` inside ``bracket``.

    Safeguarded Newton started at the bracket midpoint: any Newton step that
    leaves the current bracket is replaced by bisection. ``target`` and the
    bracket ends may be arrays (solved elementwise).
    """
    scalar = np.ndim(target) == 0 and np.ndim(bracket[0]) == 0 and np.ndim(bracket[1]) == 0
    target = np.atleast_1d(np.asarray(target, dtype=float))
    d_lo, d_hi = fn.domain
    lo = np.clip(np.broadcast_to(np.asarray(bracket[0], dtype=float), target.shape), d_lo, d_hi).copy()
    hi = np.clip(np.broadcast_to(np.asarray(bracket[1], dtype=float), target.shape), d_lo, d_hi).copy()
    f_lo = fn(lo) - target
    f_hi = fn(hi) - target
    bad = (f_lo > tol) | (f_hi < -tol) | (lo > hi)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise BracketInvalid(
            f"target {target[k]} not within [{f_lo[k] + target[k]}, {f_hi[k] + target[k]}]"
            f" on bracket [{lo[k]}, {hi[k]}]")

    # narrow to the node segment holding the root; node values are increasing
    traj = fn.underlying
    j = np.clip(np.searchsorted(traj.y[:, 0], target, side="right") - 1, 0, traj.n_segments - 1)
    n_lo = np.maximum(lo, traj.t[j])
    n_hi = np.minimum(hi, traj.t[j + 1])
    ok = n_lo <= n_hi
    ok[ok] = (fn(n_lo[ok]) - target[ok] <= tol) & (fn(n_hi[ok]) - target[ok] >= -tol)
    lo = np.where(ok, n_lo, lo)
    hi = np.where(ok, n_hi, hi)

    x = 0.5 * (lo + hi)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = x[idx]
        r = fn(xa) - target[idx]
        done = np.abs(r) <= tol
        slope = fn.derivative(xa)
        # one final Newton correction on converged points, kept if it stays bracketed
        step = xa - r / np.where(slope > 0, slope, np.inf)
        pos = r > 0
        lo[idx] = np.where(~done & ~pos, xa, lo[idx])
        hi[idx] = np.where(~done & pos, xa, hi[idx])
        inside = (step >= lo[idx]) & (step <= hi[idx])
        newton_ok = inside & (slope > 0)
        x_next = np.where(newton_ok, step, 0.5 * (lo[idx] + hi[idx]))
        x[idx] = np.where(done, np.where(newton_ok, step, xa), x_next)
        width = hi[idx] - lo[idx]
        stalled = width <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(xa))
        active[idx[done | stalled]] = False
    else:
        if np.any(active):
            raise NoConvergence(f"inversion did not converge in {max_iter} iterations")
    return float(x[0]) if scalar else x
