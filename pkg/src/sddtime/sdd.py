"""Integration of the delay system whose delay obeys its own relaxation ODE.

The system is::

    y'(t)   = f(t, y(t), y(t - eta(t)))
    eta'(t) = -mu * (eta(t) - eta_bar) + G(y(t))

with history ``y = g`` on ``[t0 - h, t0]``, ``eta(t0) = eta0`` and ``h = 2 * eta_bar``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import (
    CertificateRequired,
    HorizonTooLong,
    InvalidH1,
    InvalidParams,
    IterationDiverged,
    StepMismatch,
    StepTooLarge,
)
from .trajectory import MonotoneFn, Trajectory, invert_monotone

OVERLAP_TOL = 1e-12
OVERLAP_MAX_ITER = 10


@dataclass(frozen=True)
class Params:
    """Model data.

    ``f(t, y, y_delayed) -> array`` and ``G(y) -> float``. The Lipschitz
    constants and ``g_sup`` (a bound on ``|G|``) are declared by the caller;
    they are used by the certificates and the Gronwall bound, never estimated.
    """

    mu: float
    eta_bar: float
    f: Callable
    G: Callable
    lip_f: float = 1.0
    lip_G: float = 1.0
    g_sup: float = 0.0
    dim: int = 1
    name: str = ""

    def __post_init__(self):
        if not (self.mu > 0 and self.eta_bar > 0):
            raise InvalidParams("mu and eta_bar must be positive")
        if self.dim < 1:
            raise InvalidParams("dim must be a positive integer")
        if self.lip_f < 0 or self.lip_G < 0 or self.g_sup < 0:
            raise InvalidParams("Lipschitz constants and g_sup must be nonnegative")
        if self.g_sup > self.mu * self.eta_bar * (1 + 1e-12):
            raise InvalidParams(
                f"sup|G| = {self.g_sup} exceeds mu*eta_bar = {self.mu * self.eta_bar}; "
                "the delay is then not confined to [0, 2*eta_bar]")

    @property
    def h(self) -> float:
        return 2.0 * self.eta_bar

    def eta_rhs(self, eta: float, y) -> float:
        return -self.mu * (eta - self.eta_bar) + float(self.G(y))


@dataclass(frozen=True)
class InitialData:
    g: Trajectory
    eta0: float
    t0: float = 0.0

    def __post_init__(self):
        if not np.allclose(self.g.d_hi[:-1], self.g.d_lo[1:], rtol=1e-9, atol=1e-12):
            raise InvalidParams("history g must be C^1 (matching derivatives at joins)")
        if abs(self.g.t_max - self.t0) > 1e-12 * max(1.0, abs(self.t0)):
            raise InvalidParams("history must end at t0")

    def validate(self, p: Params):
        if not 0.0 <= self.eta0 <= p.h:
            raise InvalidParams(f"eta0 = {self.eta0} outside [0, {p.h}]")
        if self.g.t_min > self.t0 - p.h + 1e-12 * max(1.0, abs(self.t0)):
            raise InvalidParams(f"history must cover [t0 - h, t0] = [{self.t0 - p.h}, {self.t0}]")
        if self.g.dim != p.dim:
            raise InvalidParams(f"history dimension {self.g.dim} != params dim {p.dim}")


@dataclass(frozen=True)
class SddSolution:
    y: Trajectory
    eta: Trajectory
    sigma: Optional[MonotoneFn]
    params: Params
    initial: InitialData
    dt: float = field(default=float("nan"))

    @property
    def t0(self) -> float:
        return self.initial.t0

    @property
    def T(self) -> float:
        return self.eta.t_max

    @property
    def mesh(self) -> np.ndarray:
        return self.eta.t


def monotonicity_certificate(p: Params) -> bool:
    """True iff ``2*mu*eta_bar < 1``, which keeps ``t - eta(t)`` strictly increasing."""
    return 2.0 * p.mu * p.eta_bar < 1.0


def sigma_slope_floor(p: Params) -> float:
    return 1.0 - 2.0 * p.mu * p.eta_bar


def delay_floor_certificate(p: Params, h1: float) -> bool:
    """True iff ``sup|G| <= mu*(eta_bar - h1)``, which keeps ``eta >= h1`` once it starts there."""
    if not 0.0 < h1 <= p.eta_bar:
        raise InvalidH1(f"h1 = {h1} not in (0, {p.eta_bar}]")
    return p.g_sup <= p.mu * (p.eta_bar - h1)


def _check_step(p: Params, dt: float):
    if not dt > 0:
        raise StepMismatch("step must be positive")
    if dt > p.eta_bar / 4:
        raise StepTooLarge(f"dt = {dt} exceeds eta_bar/4 = {p.eta_bar / 4}")
    ratio = p.h / dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise StepMismatch(f"step {dt} does not divide h = {p.h}")


def _herm(y0, d0, y1, d1, step, theta):
    t2 = theta * theta
    t3 = t2 * theta
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + theta) * step * d0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * step * d1)


def _herm_prime(y0, d0, y1, d1, step, theta):
    t2 = theta * theta
    return ((6 * t2 - 6 * theta) * (y0 - y1) / step + (3 * t2 - 4 * theta + 1) * d0
            + (3 * t2 - 2 * theta) * d1)


def integrate_sdd(p: Params, init: InitialData, T: float, dt: float,
                  sigma: Optional[bool] = None) -> SddSolution:
    """Fixed-step RK4 on the coupled ``(y, eta)`` system.

    Delayed values come from the cubic-Hermite dense output of the steps
    already taken (or from ``g``). When ``t - eta(t)`` falls inside the
    current step the step is solved by functional iteration, starting from
    the previous segment's extrapolant.

    ``sigma=None`` builds the deviating argument when the monotonicity
    certificate holds; ``True`` demands it; ``False`` skips it.
    """
    init.validate(p)
    _check_step(p, dt)
    t0 = init.t0
    if not T > t0:
        raise InvalidParams("horizon T must exceed t0")
    if sigma and not monotonicity_certificate(p):
        raise CertificateRequired("the deviating argument needs 2*mu*eta_bar < 1")

    f, g, mu, eta_bar = p.f, init.g, p.mu, p.eta_bar
    G = p.G
    n = int(math.ceil((T - t0) / dt - 1e-9))
    ts = t0 + dt * np.arange(n + 1)

    Y = [np.atleast_1d(np.asarray(g.eval(t0), dtype=float)).copy()]
    E = [float(init.eta0)]
    Y[0].setflags(write=False)
    state = {"overlap": False}

    def lag(tau, k, cand):
        if tau <= t0:
            return g.eval(tau)
        j = int((tau - t0) / dt)
        if j >= k:
            theta = (tau - ts[k]) / dt
            if theta <= 0.0:
                return Y[k]
            state["overlap"] = True
            return _herm(Y[k], D[k], cand[0], cand[1], dt, min(theta, 1.0))
        return _herm(Y[j], D[j], Y[j + 1], D[j + 1], dt, (tau - ts[j]) / dt)

    D = [np.atleast_1d(np.asarray(f(t0, Y[0], lag(t0 - E[0], 0, None)), dtype=float))]
    DE = [p.eta_rhs(E[0], Y[0])]

    for k in range(n):
        t = ts[k]
        yk, ek, k1y, k1e = Y[k], E[k], D[k], DE[k]
        if k >= 1:
            cand = (_herm(Y[k - 1], D[k - 1], yk, k1y, dt, 2.0),
                    _herm_prime(Y[k - 1], D[k - 1], yk, k1y, dt, 2.0))
        else:
            cand = (yk + dt * k1y, k1y)
        prev = None
        for _ in range(OVERLAP_MAX_ITER):
            state["overlap"] = False
            th = t + dt / 2
            y2 = yk + dt / 2 * k1y
            e2 = ek + dt / 2 * k1e
            k2y = f(th, y2, lag(th - e2, k, cand))
            k2e = p.eta_rhs(e2, y2)
            y3 = yk + dt / 2 * k2y
            e3 = ek + dt / 2 * k2e
            k3y = f(th, y3, lag(th - e3, k, cand))
            k3e = p.eta_rhs(e3, y3)
            y4 = yk + dt * k3y
            e4 = ek + dt * k3e
            t1 = ts[k + 1]
            k4y = f(t1, y4, lag(t1 - e4, k, cand))
            k4e = p.eta_rhs(e4, y4)
            y_new = yk + dt / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
            e_new = ek + dt / 6 * (k1e + 2 * k2e + 2 * k3e + k4e)
            d_new = f(t1, y_new, lag(t1 - e_new, k, (y_new, cand[1])))
            d_new = np.atleast_1d(np.asarray(d_new, dtype=float))
            if not state["overlap"]:
                break
            change = np.inf if prev is None else float(np.max(np.abs(y_new - prev)))
            prev = y_new
            cand = (y_new, d_new)
            if change < OVERLAP_TOL:
                break
        else:
            if not np.all(np.isfinite(y_new)) or change > 1e-8:
                raise IterationDiverged(f"overlap iteration at t={t} stalled with change {change}")
        Y.append(np.asarray(y_new, dtype=float))
        E.append(float(e_new))
        D.append(d_new)
        DE.append(p.eta_rhs(E[-1], Y[-1]))

    y_sol = Trajectory.from_nodes(ts, np.array(Y), np.array(D))
    E = np.array(E)
    DE = np.array(DE)
    eta = Trajectory.from_nodes(ts, E, DE)
    y = Trajectory.concatenate([g, y_sol])

    sig = None
    if sigma is not False and monotonicity_certificate(p):
        sig = MonotoneFn(Trajectory.from_nodes(ts, ts - E, 1.0 - DE), sigma_slope_floor(p))
    return SddSolution(y=y, eta=eta, sigma=sig, params=p, initial=init, dt=dt)


def deviating_argument(sol: SddSolution, t):
    """``t - eta(t)``."""
    e = sol.eta.eval(t)
    return t - (float(e[0]) if np.ndim(t) == 0 else e[:, 0])


def sigma_inverse(sol: SddSolution, tau):
    """Inverse of the deviating argument; the result lies in ``[tau, tau + h]``."""
    if sol.sigma is None:
        raise CertificateRequired("sigma is invertible only under 2*mu*eta_bar < 1")
    tau_arr = np.asarray(tau, dtype=float)
    return invert_monotone(sol.sigma, tau, (tau_arr, tau_arr + sol.params.h))


def lipschitz_estimate_y(sol) -> float:
    """Largest ``|y'|`` over the mesh (both one-sided derivatives at each node)."""
    traj = sol.y if isinstance(sol, SddSolution) else sol
    return float(np.max(np.linalg.norm(traj.node_derivatives(), axis=1)))


def lipschitz_diagnostic(p: Params, sol: SddSolution, stride: int = 7) -> dict:
    """Finite-difference check of the declared ``lip_f`` and ``lip_G`` along a solution.

    Warns (does not raise) when a sampled quotient exceeds the declared constant.
    """
    ts = sol.mesh
    ys = sol.y.eval(ts)
    yd = sol.y.eval(deviating_argument(sol, ts))
    fv = np.array([np.atleast_1d(p.f(t, a, b)) for t, a, b in zip(ts, ys, yd)])
    gv = np.array([float(p.G(a)) for a in ys])
    i = np.arange(len(ts) - stride)
    j = i + stride
    dy = np.linalg.norm(ys[i] - ys[j], axis=1)
    dyd = np.linalg.norm(yd[i] - yd[j], axis=1)
    # time-dependence of f is folded in; autonomous catalogs are unaffected
    mask = (dy + dyd) > 1e-9
    qf = np.linalg.norm(fv[i] - fv[j], axis=1)[mask] / (dy + dyd)[mask]
    qg = np.abs(gv[i] - gv[j])[dy > 1e-9] / dy[dy > 1e-9]
    out = {"lip_f_observed": float(qf.max(initial=0.0)), "lip_G_observed": float(qg.max(initial=0.0))}
    if out["lip_f_observed"] > p.lip_f * (1 + 1e-6):
        warnings.warn(f"declared lip_f={p.lip_f} below observed {out['lip_f_observed']:.6g}")
    if out["lip_G_observed"] > p.lip_G * (1 + 1e-6):
        warnings.warn(f"declared lip_G={p.lip_G} below observed {out['lip_G_observed']:.6g}")
    return out


def picard_iterates(p: Params, init: InitialData, T: float, dt: float = 1e-3) -> Iterator[SddSolution]:
    """Successive Picard iterates of the integral form of the system.

    The zeroth iterate is the constant extension ``y = g(t0)``, ``eta = eta0``.
    Integrals use Simpson's rule on each panel of a mesh with spacing ``dt/4``;
    each iterate is stored as a Hermite trajectory whose node derivatives are
    the integrands, so it is C^1 and can be evaluated at delayed times.
    """
    init.validate(p)
    t0 = init.t0
    if T - t0 > p.h * (1 + 1e-12):
        raise HorizonTooLong(f"Picard oracle is limited to T - t0 <= h = {p.h}")
    H = dt / 4
    n = int(math.ceil((T - t0) / H - 1e-9))
    ts = t0 + H * np.arange(n + 1)
    mids = ts[:-1] + H / 2
    g, mu, eta_bar = init.g, p.mu, p.eta_bar
    y_start = np.atleast_1d(g.eval(t0))
    m = len(y_start)

    y_cur = Trajectory.concatenate([g, Trajectory.constant(y_start, t0, ts[-1])])
    eta_cur = Trajectory.constant([init.eta0], t0, ts[-1])
    decay = math.exp(-mu * H)
    decay_half = math.exp(-mu * H / 2)

    while True:
        def integrand(tt):
            yv = y_cur.eval(tt)
            ev = eta_cur.eval(tt)[:, 0]
            yd = y_cur.eval(tt - ev)
            F = np.array([np.atleast_1d(p.f(a, b, c)) for a, b, c in zip(tt, yv, yd)]).reshape(len(tt), m)
            Gv = np.array([float(p.G(b)) for b in yv])
            return F, Gv

        F_n, G_n = integrand(ts)
        F_m, G_m = integrand(mids)
        y_new = np.empty((n + 1, m))
        y_new[0] = y_start
        y_new[1:] = y_start + np.cumsum(H / 6 * (F_n[:-1] + 4 * F_m + F_n[1:]), axis=0)
        conv = np.empty(n + 1)
        conv[0] = 0.0
        panel = H / 6 * (decay * G_n[:-1] + 4 * decay_half * G_m + G_n[1:])
        for i in range(n):
            conv[i + 1] = decay * conv[i] + panel[i]
        eta_new = eta_bar + np.exp(-mu * (ts - t0)) * (init.eta0 - eta_bar) + conv
        deta_new = -mu * (eta_new - eta_bar) + G_n
        y_cur = Trajectory.concatenate([g, Trajectory.from_nodes(ts, y_new, F_n)])
        eta_cur = Trajectory.from_nodes(ts, eta_new, deta_new)
        sig = None
        if monotonicity_certificate(p):
            sig = MonotoneFn(Trajectory.from_nodes(ts, ts - eta_new, 1.0 - deta_new),
                             sigma_slope_floor(p))
        yield SddSolution(y=y_cur, eta=eta_cur, sigma=sig, params=p, initial=init, dt=H)


def picard_oracle(p: Params, init: InitialData, T: float, iters: int, dt: float = 1e-3) -> SddSolution:
    """Return Picard iterate number ``iters`` (independent check of :func:`integrate_sdd`)."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    for k, sol in enumerate(picard_iterates(p, init, T, dt), start=1):
        if k == iters:
            return sol
