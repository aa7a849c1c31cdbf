"""The time map ``t = alpha(s)`` that turns the variable delay into the constant delay ``h``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CertificateRequired, EtaZero, NonMonotone, OutOfDomain, SolutionTooShort
from .sdd import InitialData, Params, SddSolution, delay_floor_certificate, monotonicity_certificate
from .trajectory import MonotoneFn, Trajectory, invert_monotone

COMPAT_TOL = 1e-12


@dataclass(frozen=True)
class OmegaSpec:
    """Initial piece of the time map on ``[s0 - h, s0]``."""

    s0: float
    omega: Trajectory
    d0: float

    @property
    def h(self) -> float:
        return self.omega.t_max - self.omega.t_min

    @property
    def t0(self) -> float:
        return float(self.omega.eval(self.s0)[0])

    @property
    def eta0(self) -> float:
        return self.t0 - float(self.omega.eval(self.omega.t_min)[0])

    def slope(self, s, side: str = "right"):
        v = self.omega.eval_derivative(s, side)
        return float(v[0]) if np.ndim(s) == 0 else v[:, 0]

    def compatibility_residual(self, p: Params, init: InitialData) -> float:
        """``omega'(s0) * [1 + mu*(eta0 - eta_bar) - G(g(t0))] - omega'(s0 - h)``."""
        factor = 1.0 + p.mu * (init.eta0 - p.eta_bar) - float(p.G(init.g.eval(init.t0)))
        return self.slope(self.s0, "left") * factor - self.slope(self.omega.t_min)

    def min_slope(self, n: int = 2001) -> float:
        return float(self.slope(np.linspace(self.omega.t_min, self.s0, n)).min())


def make_omega(s0: float, h: float, t0: float, eta0: float, slope_start: float,
               slope_end: float) -> OmegaSpec:
    """Single cubic from ``(s0 - h, t0 - eta0)`` to ``(s0, t0)`` with the given end slopes."""
    omega = Trajectory([s0 - h, s0], [[t0 - eta0], [t0]], [[slope_start]], [[slope_end]])
    om = OmegaSpec(s0=s0, omega=omega, d0=slope_end)
    if om.min_slope() <= 0:
        raise NonMonotone(
            f"omega with end slopes ({slope_start}, {slope_end}) is not increasing; adjust d0")
    return om


def default_omega(init: InitialData, p: Params, s0: float = 0.0, d0: Optional[float] = None) -> OmegaSpec:
    """Cubic initial time map satisfying the compatibility condition at ``s0``.

    End slopes are ``d0 * [1 + mu*(eta0 - eta_bar) - G(g(t0))]`` at ``s0 - h``
    and ``d0`` at ``s0``. ``d0`` defaults to the secant slope ``eta0 / h``.
    """
    if init.eta0 <= 0:
        raise EtaZero("the time map needs eta0 > 0 (omega(s0 - h) < omega(s0))")
    if d0 is None:
        d0 = init.eta0 / p.h
    if not d0 > 0:
        raise ValueError("d0 must be positive")
    factor = 1.0 + p.mu * (init.eta0 - p.eta_bar) - float(p.G(init.g.eval(init.t0)))
    return make_omega(s0, p.h, init.t0, init.eta0, d0 * factor, d0)


@dataclass(frozen=True)
class TimeMap:
    """Strictly increasing ``alpha`` on ``[s0 - h, s0 + S]`` with ``alpha(s0) = t0``."""

    alpha: MonotoneFn
    s0: float
    t0: float
    h: float
    source: Optional[SddSolution] = None

    def __call__(self, s, side: str = "right"):
        return self.alpha(s, side)

    def derivative(self, s, side: str = "right"):
        return self.alpha.derivative(s, side)

    def inverse(self, t):
        return alpha_inverse(self, t)

    def inverse_derivative(self, t):
        return 1.0 / self.derivative(alpha_inverse(self, t))

    @property
    def traj(self) -> Trajectory:
        return self.alpha.underlying

    @property
    def S(self) -> float:
        return self.traj.t_max - self.s0

    @property
    def mesh(self) -> np.ndarray:
        """Node times ``s >= s0``."""
        s = self.traj.t
        return s[s >= self.s0 - 1e-12 * max(1.0, abs(self.s0))]

    @property
    def range(self) -> tuple[float, float]:
        return float(self.traj.y[0, 0]), float(self.traj.y[-1, 0])

    def shifted(self, offset: float) -> "TimeMap":
        """Copy with ``alpha + offset``; used to inject faults into checks."""
        tr = self.traj
        moved = Trajectory(tr.t, tr.y + offset, tr.d_lo, tr.d_hi)
        return TimeMap(MonotoneFn(moved, self.alpha.slope_floor), self.s0, self.t0 + offset, self.h, self.source)


def timemap_from_trajectory(traj: Trajectory, s0: float, h: float,
                            source: Optional[SddSolution] = None) -> TimeMap:
    floor = float(traj.node_derivatives().min())
    if not floor > 0:
        raise NonMonotone(f"time map has non-positive slope {floor}")
    t0 = float(traj.eval(s0)[0])
    return TimeMap(MonotoneFn(traj, floor, tol=0.0), s0, t0, h, source)


def build_alpha(sol: SddSolution, om: OmegaSpec, S: float, ds: Optional[float] = None) -> TimeMap:
    """Construct ``alpha`` window by window from ``alpha(s) = sigma^{-1}(alpha(s - h))``.

    Nodes sit on an s-mesh of spacing ``ds`` (default: the solution's step).
    Slopes follow ``alpha'(s) = alpha'(s - h) / sigma'(alpha(s))``, kept
    one-sided so that a slope jump at ``s0`` propagates to ``s0 + k*h``.
    """
    p = sol.params
    if not monotonicity_certificate(p) or sol.sigma is None:
        raise CertificateRequired("building alpha needs 2*mu*eta_bar < 1")
    h = p.h
    ds = sol.dt if ds is None else ds
    M = int(round(h / ds))
    if abs(M * ds - h) > 1e-9 * h:
        raise ValueError(f"ds = {ds} does not divide h = {h}")
    n = int(np.ceil(S / ds - 1e-9))
    s0 = om.s0
    s = s0 - h + ds * np.arange(M + n + 1)
    s[M] = s0

    vals = np.empty(M + n + 1)
    right = np.empty(M + n + 1)  # slope on the segment starting at node j
    left = np.empty(M + n + 1)  # slope on the segment ending at node j
    vals[:M + 1] = om.omega.eval(s[:M + 1])[:, 0]
    right[:M + 1] = om.slope(s[:M + 1], "right")
    left[:M + 1] = om.slope(s[:M + 1], "left")

    sig = sol.sigma
    t_hi = sig.domain[1]
    # anchor: alpha(s0) = t0; the right slope at s0 follows the first-window rule
    vals[M] = om.t0
    right[M] = right[0] / sig.derivative(sol.t0, "right")
    for start in range(M + 1, M + n + 1, M):
        stop = min(start + M, M + n + 1)
        js = np.arange(start, stop)
        targets = vals[js - M]
        if targets[-1] > sig(t_hi) + 1e-12:
            raise SolutionTooShort(
                f"SDD solution ends at t={t_hi}; alpha up to s={s[stop - 1]} needs more")
        vals[js] = invert_monotone(sig, targets, (targets, targets + h))
        right[js] = right[js - M] / sig.derivative(vals[js], "right")
        left[js] = left[js - M] / sig.derivative(vals[js], "left")

    traj = Trajectory(s, vals, right[:-1], left[1:])
    return timemap_from_trajectory(traj, s0, h, source=sol)


def alpha_inverse(tm: TimeMap, t):
    """``s`` with ``alpha(s) = t``."""
    lo, hi = tm.range
    tt = np.asarray(t, dtype=float)
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(tt < lo - slack) or np.any(tt > hi + slack):
        raise OutOfDomain(f"t={t} outside the range [{lo}, {hi}] of alpha")
    d_lo, d_hi = tm.traj.domain
    return invert_monotone(tm.alpha, np.clip(tt, lo, hi) if tt.ndim else float(min(max(tt, lo), hi)),
                           (d_lo, d_hi))


@dataclass(frozen=True)
class BoundsReport:
    upper_pass: bool
    upper_margin: float
    lower_pass: Optional[bool]
    lower_margin: Optional[float]
    h1: Optional[float]
    certified: Optional[bool]
    tol: float = 1e-9


def alpha_bounds_check(tm: TimeMap, h1: Optional[float] = None, tol: float = 1e-9) -> BoundsReport:
    """Worst margins of the two affine bounds on ``alpha`` over the mesh.

    Upper: ``alpha(s) <= alpha(s0) + h + (s - s0)`` (always).
    Lower: ``alpha(s) >= alpha(s0) - h1 + (h1/h)(s - s0)`` (needs the delay floor h1).
    ``certified`` records whether the generating solution satisfies the
    delay-floor certificate with ``eta0 >= h1``; it is ``None`` for maps without
    a source solution.
    """
    s = tm.mesh
    a = tm(s)
    a0 = float(tm(tm.s0))
    rel = s - tm.s0
    upper = float(np.min(a0 + tm.h + rel - a))
    if h1 is None:
        return BoundsReport(upper >= -tol, upper, None, None, None, None, tol)
    lower = float(np.min(a - (a0 - h1 + h1 / tm.h * rel)))
    certified = None
    if tm.source is not None:
        src = tm.source
        certified = bool(delay_floor_certificate(src.params, h1) and src.initial.eta0 >= h1)
    return BoundsReport(upper >= -tol, upper, lower >= -tol, lower, h1, certified, tol)


@dataclass(frozen=True)
class EquivalenceReport:
    """Finite-horizon affine envelope ``A1 t + B1 <= s - s0 <= A2 t + B2``."""

    A1: float
    B1: float
    A2: float
    B2: float
    valid: bool
    horizon: tuple[float, float]
    dual_ok: bool
    floor_envelope: Optional[tuple[float, float, float, float]] = None
    floor_valid: Optional[bool] = None
    floor_dominates: Optional[bool] = None


def time_equivalence_constants(tm: TimeMap, h1: Optional[float] = None, tol: float = 1e-9) -> EquivalenceReport:
    """Tightest common-slope affine envelope of ``s`` in terms of ``t`` on the mesh.

    The slope is the least-squares slope of ``s`` against ``t``; the offsets are
    the extreme residuals. Valid only at this horizon. With ``h1`` the
    constants ``A1=1, B1=-(alpha(s0)+h), A2=h/h1, B2=-(h/h1)(alpha(s0)-h1)`` are
    also checked against the mesh and against the fitted envelope.
    """
    s = tm.mesh
    t = tm(s)
    rel = s - tm.s0
    if len(t) > 1 and np.ptp(t) > 0:
        A = float(np.polyfit(t, rel, 1)[0])
    else:
        A = float("nan")
    resid = rel - A * t
    B1, B2 = float(resid.min()), float(resid.max())
    valid = bool(A > 0)
    dual_ok = bool(valid and np.all(rel / A - B2 / A <= t + tol) and np.all(t <= rel / A - B1 / A + tol))
    rep = dict(A1=A, B1=B1, A2=A, B2=B2, valid=valid, horizon=(float(s[0]), float(s[-1])), dual_ok=dual_ok)
    if h1 is not None:
        a0 = float(tm(tm.s0))
        P = (1.0, -(a0 + tm.h), tm.h / h1, -(tm.h / h1) * (a0 - h1))
        lo_line = P[0] * t + P[1]
        hi_line = P[2] * t + P[3]
        floor_valid = bool(np.all(lo_line <= rel + tol) and np.all(rel <= hi_line + tol))
        ends = np.array([t.min(), t.max()])
        dominates = bool(np.all(P[0] * ends + P[1] <= A * ends + B1 + tol)
                         and np.all(A * ends + B2 <= P[2] * ends + P[3] + tol))
        rep.update(floor_envelope=P, floor_valid=floor_valid, floor_dominates=dominates)
    return EquivalenceReport(**rep)
