"""Method-of-steps solver for the constant-delay system in transformed time ``s``.

In each window ``[s0 + (k-1)h, s0 + kh]`` the delayed data ``z(s-h)``,
``alpha(s-h)`` and ``alpha'(s-h)`` are already known, and ``(z, chi)`` solve

    z'   = f(chi + alpha(s-h), z, z(s-h)) * alpha'(s-h) / D
    chi' = (-mu*(chi - eta_bar) + G(z)) * alpha'(s-h) / D
    D    = 1 + mu*(chi - eta_bar) - G(z)

after which ``alpha(s) = chi(s) + alpha(s-h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateRequired, DenominatorVanished, InvalidParams, OutOfDomain, StepMismatch
from .sdd import InitialData, Params, monotonicity_certificate
from .transform import OmegaSpec, TimeMap, alpha_inverse, timemap_from_trajectory
from .trajectory import Trajectory

DENOM_FLOOR = 1e-9


def chi_rhs(chi: float, z, alpha_dot_lag: float, p: Params) -> float:
    """Right-hand side of the delay equation written in ``s``."""
    gz = float(p.G(z))
    denom = 1.0 + p.mu * (chi - p.eta_bar) - gz
    if denom <= DENOM_FLOOR:
        raise DenominatorVanished(f"1 + mu*(chi - eta_bar) - G(z) = {denom}")
    return (-p.mu * (chi - p.eta_bar) + gz) * alpha_dot_lag / denom


@dataclass(frozen=True)
class TransformedSolution:
    z: Trajectory
    chi: Trajectory
    alpha: TimeMap
    omega: OmegaSpec
    params: Params
    initial: InitialData
    ds: float
    min_denominator: float = float("nan")
    max_denominator: float = float("nan")
    joins: dict = field(default_factory=dict)

    @property
    def s0(self) -> float:
        return self.omega.s0

    @property
    def S(self) -> float:
        return self.chi.t_max - self.s0

    @property
    def mesh(self) -> np.ndarray:
        return self.chi.t

    def with_alpha(self, alpha: TimeMap) -> "TransformedSolution":
        """Copy carrying a different time map (fault injection)."""
        return TransformedSolution(self.z, self.chi, alpha, self.omega, self.params, self.initial,
                                   self.ds, self.min_denominator, self.max_denominator, self.joins)


def _check_ds(p: Params, ds: float) -> int:
    if not ds > 0:
        raise StepMismatch("ds must be positive")
    M = int(round(p.h / ds))
    if M < 1 or abs(M * ds - p.h) > 1e-9 * p.h:
        raise StepMismatch(f"ds = {ds} does not divide h = {p.h}")
    return M


def _march(p: Params, z_hist: Trajectory, alpha_hist: Trajectory, chi_start: float,
           s_start: float, n_steps: int, ds: float):
    """Advance ``(z, chi, alpha)`` by ``n_steps`` steps of size ``ds`` from ``s_start``.

    ``z_hist`` and ``alpha_hist`` must cover ``[s_start - h, s_start]``.
    Returns node arrays and one-sided node slopes for ``z``, ``chi``, ``alpha``.
    """
    h, mu, eta_bar, f, G = p.h, p.mu, p.eta_bar, p.f, p.G
    M = int(round(h / ds))
    s = s_start + ds * np.arange(n_steps + 1)
    m = z_hist.dim

    Z = np.empty((n_steps + 1, m))
    C = np.empty(n_steps + 1)
    A = np.empty(n_steps + 1)
    dZ_lo = np.empty((n_steps, m))
    dZ_hi = np.empty((n_steps, m))
    dC_lo = np.empty(n_steps)
    dC_hi = np.empty(n_steps)
    dA_lo = np.empty(n_steps)
    dA_hi = np.empty(n_steps)
    Z[0] = z_hist.eval(s_start)
    C[0] = chi_start
    A[0] = alpha_hist.eval(s_start)[0]
    dmin, dmax = math.inf, -math.inf

    def rhs(si, z, chi, a_lag, ad_lag, z_lag):
        nonlocal dmin, dmax
        gz = float(G(z))
        denom = 1.0 + mu * (chi - eta_bar) - gz
        if denom <= DENOM_FLOOR:
            raise DenominatorVanished(f"denominator {denom} at s={si}")
        dmin = min(dmin, denom)
        dmax = max(dmax, denom)
        scale = ad_lag / denom
        dz = np.asarray(f(chi + a_lag, z, z_lag), dtype=float) * scale
        dchi = (-mu * (chi - eta_bar) + gz) * scale
        return dz, dchi

    # delayed data per window, evaluated in one vectorized pass; the step end
    # uses left limits so slope jumps at window joins are honoured exactly
    z_src = [z_hist]
    a_src = [alpha_hist]
    for w0 in range(0, n_steps, M):
        w1 = min(w0 + M, n_steps)
        lag_lo = s[w0:w1] - h
        lag_mid = lag_lo + ds / 2
        lag_hi = s[w0 + 1:w1 + 1] - h
        zt, at = z_src[-1], a_src[-1]
        zl_lo, zl_mid, zl_hi = zt.eval(lag_lo), zt.eval(lag_mid), zt.eval(lag_hi, "left")
        al_lo, al_mid, al_hi = at.eval(lag_lo)[:, 0], at.eval(lag_mid)[:, 0], at.eval(lag_hi, "left")[:, 0]
        ad_lo = at.eval_derivative(lag_lo)[:, 0]
        ad_mid = at.eval_derivative(lag_mid)[:, 0]
        ad_hi = at.eval_derivative(lag_hi, "left")[:, 0]
        for i in range(w0, w1):
            q = i - w0
            si = s[i]
            z, chi = Z[i], C[i]
            k1z, k1c = rhs(si, z, chi, al_lo[q], ad_lo[q], zl_lo[q])
            sm = si + ds / 2
            k2z, k2c = rhs(sm, z + ds / 2 * k1z, chi + ds / 2 * k1c, al_mid[q], ad_mid[q], zl_mid[q])
            k3z, k3c = rhs(sm, z + ds / 2 * k2z, chi + ds / 2 * k2c, al_mid[q], ad_mid[q], zl_mid[q])
            k4z, k4c = rhs(s[i + 1], z + ds * k3z, chi + ds * k3c, al_hi[q], ad_hi[q], zl_hi[q])
            Z[i + 1] = z + ds / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
            C[i + 1] = chi + ds / 6 * (k1c + 2 * k2c + 2 * k3c + k4c)
            ez, ec = rhs(s[i + 1], Z[i + 1], C[i + 1], al_hi[q], ad_hi[q], zl_hi[q])
            dZ_lo[i], dC_lo[i] = k1z, k1c
            dZ_hi[i], dC_hi[i] = ez, ec
        A[w0 + 1:w1 + 1] = C[w0 + 1:w1 + 1] + al_hi
        dA_lo[w0:w1] = dC_lo[w0:w1] + ad_lo
        dA_hi[w0:w1] = dC_hi[w0:w1] + ad_hi
        if w1 < n_steps:
            # the finished window is the delayed source for the next one
            z_src.append(Trajectory(s[w0:w1 + 1], Z[w0:w1 + 1], dZ_lo[w0:w1], dZ_hi[w0:w1]))
            a_src.append(Trajectory(s[w0:w1 + 1], A[w0:w1 + 1], dA_lo[w0:w1], dA_hi[w0:w1]))
    A[0] = C[0] + alpha_hist.eval(s_start - h)[0]
    return dict(s=s, Z=Z, C=C, A=A, dZ=(dZ_lo, dZ_hi), dC=(dC_lo, dC_hi), dA=(dA_lo, dA_hi),
                dmin=dmin, dmax=dmax)


def _initial_z(p: Params, init: InitialData, om: OmegaSpec, ds: float, M: int) -> Trajectory:
    s = om.s0 - p.h + ds * np.arange(M + 1)
    s[-1] = om.s0
    w = om.omega.eval(s)[:, 0]
    w[-1] = init.t0
    w[0] = init.t0 - init.eta0
    wd = om.slope(s)
    wd_left = om.slope(s, "left")
    z = init.g.eval(w)
    gd = init.g.eval_derivative(w)
    gd_left = init.g.eval_derivative(w, "left")
    return Trajectory(s, z, (gd * wd[:, None])[:-1], (gd_left * wd_left[:, None])[1:])


def _join_jumps(traj: Trajectory, points) -> list[float]:
    out = []
    for sj in points:
        i = int(np.argmin(np.abs(traj.t - sj)))
        if 0 < i < len(traj.t) - 1:
            out.append(float(np.max(np.abs(traj.d_lo[i] - traj.d_hi[i - 1]))))
    return out


def integrate_transformed(p: Params, init: InitialData, om: OmegaSpec, S: float, ds: float) -> TransformedSolution:
    """Solve the transformed system on ``[s0, s0 + S]`` by the method of steps.

    The initial segment is ``z(s) = g(omega(s))``; on the first window the
    lagged slope is exactly ``omega'(s - h)``. The returned solution records
    the slope jumps of ``z``, ``chi`` and ``alpha`` at every window join.
    """
    if not monotonicity_certificate(p):
        raise CertificateRequired("the transformed system needs 2*mu*eta_bar < 1")
    init.validate(p)
    M = _check_ds(p, ds)
    if abs(om.t0 - init.t0) > 1e-12 * max(1.0, abs(init.t0)) or abs(om.eta0 - init.eta0) > 1e-12:
        raise InvalidParams("omega must satisfy omega(s0) = t0 and omega(s0 - h) = t0 - eta0")
    if abs(om.h - p.h) > 1e-12 * p.h:
        raise InvalidParams("omega must be defined on an interval of length h")
    n = int(math.ceil(S / ds - 1e-9))
    z0 = _initial_z(p, init, om, ds, M)
    a0 = Trajectory(z0.t, om.omega.eval(z0.t), om.omega.eval_derivative(z0.t)[:-1],
                    om.omega.eval_derivative(z0.t, "left")[1:])
    out = _march(p, z0, a0, float(init.eta0), om.s0, n, ds)
    return _assemble(p, init, om, ds, z0, a0, out)


def _assemble(p, init, om, ds, z_hist, a_hist, out) -> TransformedSolution:
    s = out["s"]
    z = Trajectory.concatenate([z_hist, Trajectory(s, out["Z"], *out["dZ"])])
    chi = Trajectory(s, out["C"], *out["dC"])
    a_traj = Trajectory.concatenate([a_hist, Trajectory(s, out["A"], *out["dA"])])
    alpha = timemap_from_trajectory(a_traj, om.s0, p.h)
    s0 = om.s0
    joins_at = s0 + p.h * np.arange(0, int((s[-1] - s0) / p.h + 1e-9) + 1)
    joins = {
        "s": joins_at.tolist(),
        "alpha": _join_jumps(a_traj, joins_at),
        "z": _join_jumps(z, joins_at),
        "chi": _join_jumps(chi, joins_at[1:]),
        "compatibility_residual": float(om.compatibility_residual(p, init)),
    }
    return TransformedSolution(z=z, chi=chi, alpha=alpha, omega=om, params=p, initial=init, ds=ds,
                               min_denominator=out["dmin"], max_denominator=out["dmax"], joins=joins)


def recover_original(ts: TransformedSolution, t):
    """``(y(t), eta(t)) = (z(alpha^{-1}(t)), chi(alpha^{-1}(t)))``.

    For ``t < t0`` (the initial segment) ``eta`` is not defined and ``nan`` is returned.
    """
    s = alpha_inverse(ts.alpha, t)
    y = ts.z.eval(s)
    if np.ndim(t) == 0:
        eta = float(ts.chi.eval(s)[0]) if s >= ts.s0 else float("nan")
        return y, eta
    s = np.asarray(s)
    eta = np.full(s.shape, np.nan)
    ok = s >= ts.s0
    if np.any(ok):
        eta[ok] = ts.chi.eval(s[ok])[:, 0]
    return y, eta


def restore_initial_history(ts: TransformedSolution, t):
    """Rebuild ``g(t) = z(alpha^{-1}(t))`` on ``[t0 - eta0, t0]``."""
    t0, eta0 = ts.initial.t0, ts.initial.eta0
    tt = np.asarray(t, dtype=float)
    slack = 1e-12 * max(1.0, abs(t0))
    if np.any(tt < t0 - eta0 - slack) or np.any(tt > t0 + slack):
        raise OutOfDomain(f"t={t} outside [{t0 - eta0}, {t0}]")
    return ts.z.eval(alpha_inverse(ts.alpha, t))


@dataclass(frozen=True)
class RestartReport:
    s_mid: float
    distance: float
    z_distance: float
    chi_distance: float
    alpha_distance: float


def restart_from(ts: TransformedSolution, s_mid: float, S_end: float) -> TransformedSolution:
    """Fresh solve seeded with the state ``(z_{s_mid}, chi(s_mid), alpha_{s_mid})`` of ``ts``.

    The result covers ``[s0, s0 + S_end]``: the part of ``ts`` up to ``s_mid``
    followed by the new solve.
    """
    p, ds = ts.params, ts.ds
    k = int(round((s_mid - ts.s0) / ds))
    if abs(ts.s0 + k * ds - s_mid) > 1e-9 * max(1.0, abs(s_mid)):
        raise StepMismatch("s_mid - s0 must be a multiple of ds")
    s_mid = float(ts.z.t[np.argmin(np.abs(ts.z.t - s_mid))])
    z_hist = ts.z.restrict(s_mid - p.h, s_mid)
    a_hist = ts.alpha.traj.restrict(s_mid - p.h, s_mid)
    chi_mid = float(ts.chi.eval(s_mid)[0])
    n = int(math.ceil((ts.s0 + S_end - s_mid) / ds - 1e-9))
    out = _march(p, z_hist, a_hist, chi_mid, s_mid, n, ds)
    if k == 0:
        return _assemble(p, ts.initial, ts.omega, ds, z_hist, a_hist, out)
    s = out["s"]
    z = Trajectory.concatenate([ts.z.restrict(ts.z.t_min, s_mid), Trajectory(s, out["Z"], *out["dZ"])])
    chi = Trajectory.concatenate([ts.chi.restrict(ts.s0, s_mid), Trajectory(s, out["C"], *out["dC"])])
    a_traj = Trajectory.concatenate([ts.alpha.traj.restrict(ts.alpha.traj.t_min, s_mid),
                                     Trajectory(s, out["A"], *out["dA"])])
    return TransformedSolution(z=z, chi=chi, alpha=timemap_from_trajectory(a_traj, ts.s0, p.h),
                               omega=ts.omega, params=p, initial=ts.initial, ds=ds,
                               min_denominator=min(ts.min_denominator, out["dmin"]),
                               max_denominator=max(ts.max_denominator, out["dmax"]), joins=ts.joins)


def process_restart_check(p: Params, init: InitialData, om: OmegaSpec, s_mid: float, S: float,
                          ds: float) -> RestartReport:
    """Compare a direct solve to ``s0 + S`` with one stopped at ``s_mid`` and restarted."""
    if not om.s0 <= s_mid <= om.s0 + S:
        raise ValueError("s_mid must lie in [s0, s0 + S]")
    direct = integrate_transformed(p, init, om, S, ds)
    # the state at s0 does not depend on the horizon, so the direct solve can seed s_mid = s0
    first = direct if s_mid == om.s0 else integrate_transformed(p, init, om, s_mid - om.s0, ds)
    resumed = restart_from(first, s_mid, S)
    grid = direct.mesh[direct.mesh >= s_mid - 1e-12]
    dz = float(np.max(np.abs(direct.z.eval(grid) - resumed.z.eval(grid))))
    dc = float(np.max(np.abs(direct.chi.eval(grid) - resumed.chi.eval(grid))))
    da = float(np.max(np.abs(direct.alpha(grid) - resumed.alpha(grid))))
    return RestartReport(s_mid=s_mid, distance=max(dz, dc, da), z_distance=dz, chi_distance=dc,
                         alpha_distance=da)
