"""Numerical checks of the correspondence, bounds and stability-transfer claims.

Every check in a :class:`VerificationReport` carries an anchor naming the
claim it tests; constructing a check without one is an error.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import HorizonMismatch, NotDecaying
from .sdd import InitialData, Params, SddSolution, integrate_sdd, lipschitz_estimate_y
from .transform import OmegaSpec, TimeMap, alpha_inverse, build_alpha, default_omega
from .trajectory import Trajectory

ANCHORS = {
    "correspondence": "z(s) = y(alpha(s)), chi(s) = eta(alpha(s)), y(t) = z(alpha^{-1}(t))",
    "delay-range": "eta(t) stays in [0, 2*eta_bar] when |G| <= mu*eta_bar",
    "sigma-monotone": "sigma' >= 1 - 2*mu*eta_bar when 2*mu*eta_bar < 1",
    "alpha-upper": "alpha(s) <= alpha(s0) + h + (s - s0)",
    "alpha-lower": "alpha(s) >= alpha(s0) - h1 + (h1/h)(s - s0) under the delay floor h1",
    "gronwall": "continuous dependence with the Gronwall estimate",
    "alpha-convergence": "alpha^n -> alpha uniformly as the data converge",
    "alpha-positive": "alpha' > 0 on [s0, s0 + S]",
    "stability-transfer": "D2 (t - t0) - D1 (alpha^{-1}(t) - s0) <= 0",
    "stability-transfer-dual": "C2 (s - s0) - C1 (alpha(s) - t0) <= 0",
    "decay-fit": "log-linear decay fit quality",
    "time-equivalence": "affine two-sided bounds between s-time and t-time",
    "bounded-slope": "sup alpha' finite on the horizon",
    "bounded-inverse-slope": "sup (alpha^{-1})' finite on the horizon",
    "chain-rule": "alpha'(s) * (alpha^{-1})'(alpha(s)) = 1",
    "linear-growth": "alpha(s) <= C s + k",
    "solution-manifold": "g'(t0) = f(g(t0), g(t0 - eta0))",
    "process": "U(t, s) U(s, tau) = U(t, tau)",
    "boundedness-transfer": "sup |y| on [t1, T] equals sup |z| on the matching s-interval",
}


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="

    def __post_init__(self):
        if not self.anchor or self.anchor not in ANCHORS:
            raise ValueError(f"check {self.name!r} has no known anchor: {self.anchor!r}")

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name} ({self.anchor}): {self.value:.6g} {self.relation} {self.threshold:.6g}"


@dataclass
class VerificationReport:
    scenario: str
    checks: list = field(default_factory=list)
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    def add(self, name: str, anchor: str, value: float, threshold: float, relation: str = "<=") -> Check:
        value = float(value)
        if relation == "<=":
            ok = value <= threshold
        elif relation == ">=":
            ok = value >= threshold
        else:
            raise ValueError(f"unknown relation {relation!r}")
        chk = Check(name, anchor, value, float(threshold), bool(ok), relation)
        self.checks.append(chk)
        return chk

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        self.runtime += other.runtime
        for k, v in other.meta.items():
            self.meta.setdefault(k, v)
        return self

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "runtime": self.runtime,
            "checks": [asdict(c) for c in self.checks],
            "meta": self.meta,
        }

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def verify_equivalence(sdd: SddSolution, ts, grid: int = 2001, tol: float = 1e-5) -> VerificationReport:
    """Sup-distances of the three correspondence identities on a uniform grid."""
    start = time.perf_counter()
    tm = ts.alpha
    s = np.linspace(ts.s0, ts.s0 + ts.S, grid)
    a = tm(s)
    t_end = float(a[-1])
    if t_end > sdd.T + 1e-9 * max(1.0, abs(sdd.T)):
        raise HorizonMismatch(f"SDD solution ends at {sdd.T}, transformed one reaches t={t_end}")
    t = np.linspace(sdd.t0, t_end, grid)
    rep = VerificationReport(scenario=sdd.params.name or "scenario")
    rep.add("sup|z(s) - y(alpha(s))|", "correspondence",
            np.max(np.linalg.norm(ts.z.eval(s) - sdd.y.eval(a), axis=1)), tol)
    rep.add("sup|chi(s) - eta(alpha(s))|", "correspondence",
            np.max(np.abs(ts.chi.eval(s)[:, 0] - sdd.eta.eval(a)[:, 0])), tol)
    rep.add("sup|y(t) - z(alpha^-1(t))|", "correspondence",
            np.max(np.linalg.norm(sdd.y.eval(t) - ts.z.eval(alpha_inverse(tm, t)), axis=1)), tol)
    rep.runtime = time.perf_counter() - start
    return rep


def bump(delta: float, t0: float):
    """Perturbation profile ``delta * (1 + cos(t - t0))`` and its derivative."""
    return (lambda t: delta * (1.0 + np.cos(t - t0)),
            lambda t: -delta * np.sin(t - t0))


def perturb_history(g: Trajectory, delta: float, t0: float, max_spacing: float) -> Trajectory:
    """``g`` plus the bump profile, on ``g``'s nodes refined to ``max_spacing``.

    Refining a piecewise cubic at sub-nodes reproduces it exactly, so the
    difference to ``g`` is the Hermite interpolant of the bump alone.
    """
    pieces = [np.linspace(a, b, max(1, int(math.ceil((b - a) / max_spacing))) + 1)[:-1]
              for a, b in zip(g.t[:-1], g.t[1:])]
    grid = np.concatenate(pieces + [g.t[-1:]])
    val, der = bump(delta, t0)
    y = g.eval(grid) + val(grid)[:, None]
    d_lo = g.eval_derivative(grid[:-1]) + der(grid[:-1])[:, None]
    d_hi = g.eval_derivative(grid[1:], "left") + der(grid[1:])[:, None]
    return Trajectory(grid, y, d_lo, d_hi)


def perturb_initial(p: Params, init: InitialData, delta: float) -> InitialData:
    if delta == 0:
        return init
    g = perturb_history(init.g, delta, init.t0, p.h / 512)
    eta0 = init.eta0 + delta if init.eta0 + delta <= p.h else init.eta0 - delta
    return InitialData(g, eta0, init.t0)


def _sup_diff(a: Trajectory, b: Trajectory, lo: float, hi: float, n: int = 8193) -> float:
    grid = np.union1d(np.linspace(lo, hi, n), np.concatenate([a.t, b.t]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    return float(np.max(np.linalg.norm(a.eval(grid) - b.eval(grid), axis=1)))


def gronwall_bound(p: Params, sup_dg: float, d_eta0: float, horizon: float, lip_y: float) -> float:
    """``{(1 + L_f) sup|dg| + |d eta0|} * exp(horizon * max(2 L_f + L_G, L_y))``."""
    rate = max(2 * p.lip_f + p.lip_G, lip_y)
    return ((1 + p.lip_f) * sup_dg + abs(d_eta0)) * math.exp(horizon * rate)


def continuous_dependence_experiment(p: Params, base_init: InitialData, deltas: Sequence[float],
                                     T: float, dt: float = 1e-3,
                                     base: Optional[SddSolution] = None) -> VerificationReport:
    """Perturb ``(g, eta0)`` by ``delta`` and compare the observed deviation with the Gronwall bound."""
    start = time.perf_counter()
    t0 = base_init.t0
    if base is None:
        base = integrate_sdd(p, base_init, T, dt, sigma=False)
    lip_y = lipschitz_estimate_y(base)
    rep = VerificationReport(scenario=p.name or "scenario")
    rows = []
    mesh = base.mesh
    for delta in deltas:
        init = perturb_initial(p, base_init, delta)
        sol = base if delta == 0 else integrate_sdd(p, init, T, dt, sigma=False)
        dy = np.linalg.norm(sol.y.eval(mesh) - base.y.eval(mesh), axis=1)
        de = np.abs(sol.eta.eval(mesh)[:, 0] - base.eta.eval(mesh)[:, 0])
        observed = float(np.max(dy + de))
        sup_dg = _sup_diff(init.g, base_init.g, t0 - p.h, t0)
        bound = gronwall_bound(p, sup_dg, init.eta0 - base_init.eta0, base.T - t0, lip_y)
        rows.append(dict(delta=delta, observed=observed, bound=bound, sup_dg=sup_dg,
                         d_eta0=init.eta0 - base_init.eta0))
        rep.add(f"gronwall delta={delta:g}", "gronwall", observed, bound)
    positive = [r for r in rows if r["delta"] > 0 and r["observed"] > 0]
    for a, b in zip(positive[:-1], positive[1:]):
        scaled = (a["observed"] / b["observed"]) / (a["delta"] / b["delta"])
        rep.add(f"linear scaling {a['delta']:g}->{b['delta']:g} (>= 0.5)", "gronwall", scaled, 0.5, ">=")
        rep.add(f"linear scaling {a['delta']:g}->{b['delta']:g} (<= 2)", "gronwall", scaled, 2.0)
    rep.meta.update(lip_y=lip_y, rows=rows, T=T, dt=dt)
    rep.runtime = time.perf_counter() - start
    return rep


def alpha_convergence_experiment(p: Params, base_init: InitialData, base_omega: OmegaSpec,
                                 deltas: Sequence[float], S: float, dt: float = 1e-3) -> VerificationReport:
    """Uniform convergence of the time maps built from perturbed data.

    Each perturbed datum also perturbs ``omega``: it is rebuilt with slope
    ``d0 * (1 + delta)`` at ``s0`` so it stays compatible.
    """
    start = time.perf_counter()
    T = base_init.t0 + p.h + S + 2 * dt
    base_sol = integrate_sdd(p, base_init, T, dt, sigma=True)
    base_alpha = build_alpha(base_sol, base_omega, S)
    s = base_alpha.mesh
    ref = base_alpha(s)
    rep = VerificationReport(scenario=p.name or "scenario")
    rows = []
    for delta in deltas:
        init = perturb_initial(p, base_init, delta)
        if delta == 0:
            om, tm = base_omega, base_alpha
        else:
            om = default_omega(init, p, base_omega.s0, base_omega.d0 * (1 + delta))
            tm = build_alpha(integrate_sdd(p, init, T, dt, sigma=True), om, S)
        dist = float(np.max(np.abs(tm(s) - ref)))
        sl = tm.traj
        keep = sl.t[:-1] >= base_omega.s0 - 1e-12
        min_slope = float(min(sl.d_lo[keep].min(), sl.d_hi[keep].min()))
        rows.append(dict(delta=delta, distance=dist, min_alpha_dot=min_slope,
                         min_omega_dot=om.min_slope()))
        rep.add(f"min alpha' delta={delta:g}", "alpha-positive", min_slope, 0.0, ">=")
    ladder = [r for r in rows if r["delta"] > 0]
    for a, b in zip(ladder[:-1], ladder[1:]):
        rep.add(f"sup|alpha^n - alpha| decreases {a['delta']:g}->{b['delta']:g}", "alpha-convergence",
                b["distance"], a["distance"])
        if b["distance"] > 0:
            per_decade = (a["distance"] / b["distance"]) ** (1.0 / math.log10(a["delta"] / b["delta"]))
            rep.add(f"decrease per decade {a['delta']:g}->{b['delta']:g}", "alpha-convergence",
                    per_decade, 2.0, ">=")
    rep.meta.update(rows=rows, S=S, dt=dt)
    rep.runtime = time.perf_counter() - start
    return rep


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r2: float


def fit_decay(x: np.ndarray, norms: np.ndarray) -> DecayFit:
    """Least-squares fit of ``log norm = c - rate * x``."""
    if np.any(norms <= 0) or np.any(np.diff(norms) > 1e-14 * norms[:-1]):
        raise NotDecaying("norm is not strictly positive and monotonically decreasing on the tail")
    logs = np.log(norms)
    slope, c = np.polyfit(x, logs, 1)
    resid = logs - (slope * x + c)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    if slope >= 0:
        raise NotDecaying(f"fitted rate {-slope} is not positive")
    return DecayFit(rate=-float(slope), intercept=float(c), r2=r2)


def stability_transfer_check(sdd: SddSolution, ts, tail: float = 0.5, r2_min: float = 0.99,
                             tol: float = 1e-9) -> VerificationReport:
    """Fit decay rates in ``s`` (D1) and ``t`` (D2) and test the transfer conditions.

    The conditions are evaluated with the fitted rate on one side and half the
    fitted rate on the other, i.e. with a factor-two safety margin:
    ``D2 = D2_fit / 2`` against ``D1 = D1_fit``, and ``C2 = D1_fit / 2``
    against ``C1 = D2_fit``. The largest feasible partner constants are also
    reported.
    """
    start = time.perf_counter()
    tm = ts.alpha
    s0, t0 = ts.s0, sdd.t0
    s_mesh = ts.mesh
    s_mesh = s_mesh[tm(s_mesh) <= sdd.T + 1e-12]
    s_end = s_mesh[-1]
    t_end = float(tm(s_end))
    t_mesh = sdd.mesh[sdd.mesh <= t_end + 1e-12]

    s_tail = s_mesh[s_mesh >= s0 + (1 - tail) * (s_end - s0)]
    t_tail = t_mesh[t_mesh >= t0 + (1 - tail) * (t_end - t0)]
    fit_s = fit_decay(s_tail, np.linalg.norm(ts.z.eval(s_tail), axis=1))
    fit_t = fit_decay(t_tail, np.linalg.norm(sdd.y.eval(t_tail), axis=1))
    D1, D2 = fit_s.rate, fit_t.rate

    rep = VerificationReport(scenario=sdd.params.name or "scenario")
    rep.add("R^2 of decay fit in s", "decay-fit", fit_s.r2, r2_min, ">=")
    rep.add("R^2 of decay fit in t", "decay-fit", fit_t.r2, r2_min, ">=")
    tt = t_mesh[t_mesh > t0]
    inv = np.asarray(alpha_inverse(tm, tt))
    cond = (D2 / 2) * (tt - t0) - D1 * (inv - s0)
    rep.add("max D2(t-t0) - D1(alpha^-1(t)-s0)", "stability-transfer", cond.max(), tol)
    ss = s_mesh[s_mesh > s0]
    dual = (D1 / 2) * (ss - s0) - D2 * (tm(ss) - t0)
    rep.add("max C2(s-s0) - C1(alpha(s)-t0)", "stability-transfer-dual", dual.max(), tol)
    rep.meta.update(
        D1_fit=D1, D2_fit=D2, ratio_D2_over_D1=D2 / D1, r2_s=fit_s.r2, r2_t=fit_t.r2,
        D2_max_for_D1=float(np.min(D1 * (inv - s0) / (tt - t0))),
        C2_max_for_C1=float(np.min(D2 * (tm(ss) - t0) / (ss - s0))),
    )
    rep.runtime = time.perf_counter() - start
    return rep


def _modulus(fn, lo: float, hi: float, gap: float, n: int = 2049) -> float:
    if hi - lo <= gap:
        return float("nan")
    x = np.linspace(lo, hi - gap, n)
    return float(np.max(np.abs(fn(x + gap) - fn(x))))


def assumption_A_estimates(tm: TimeMap, horizon: Optional[float] = None, levels: int = 9,
                           fd_step: float = 1e-4) -> VerificationReport:
    """Finite-horizon evidence for the growth and uniform-continuity assumptions on ``alpha``.

    Moduli of continuity are tabulated at gaps ``h / 2**k`` and kept as data;
    uniform continuity on a half-line is not decided here.
    """
    start = time.perf_counter()
    s0 = tm.s0
    s_hi = tm.traj.t_max if horizon is None else min(tm.traj.t_max, s0 + horizon)
    tr = tm.traj
    keep = (tr.t[:-1] >= s0 - 1e-12) & (tr.t[1:] <= s_hi + 1e-12)
    slopes = np.concatenate([tr.d_lo[keep, 0], tr.d_hi[keep, 0]])
    C1 = float(slopes.max())
    C2 = float(1.0 / slopes.min())
    t_lo, t_hi = float(tm(s0)), float(tm(s_hi))

    s_grid = np.linspace(s0, s_hi, 2001)
    t_grid = tm(s_grid)
    k1 = float(np.max(t_grid - C1 * s_grid))
    k2 = float(np.max(s_grid - C2 * t_grid))

    # chain rule against a finite-difference derivative of the inverse
    # points within reach of a window join are skipped: alpha'' jumps there
    eps = fd_step * max(1.0, abs(t_hi))
    inner = s_grid[1:-1]
    joins = s0 + tm.h * np.arange(0, int((s_hi - s0) / tm.h) + 2)
    near = np.min(np.abs(inner[:, None] - joins[None, :]), axis=1) <= 2 * eps * C2
    inner = inner[~near]
    ti = tm(inner)
    fd = (np.asarray(alpha_inverse(tm, ti + eps)) - np.asarray(alpha_inverse(tm, ti - eps))) / (2 * eps)
    chain = float(np.max(np.abs(tm.derivative(inner) * fd - 1.0)))

    inv = lambda t: np.asarray(alpha_inverse(tm, t))
    inv_d = lambda t: 1.0 / tm.derivative(inv(t))
    table = []
    for k in range(levels):
        gap = tm.h / 2 ** k
        table.append(dict(
            gap=gap,
            alpha=_modulus(tm, s0, s_hi, gap),
            alpha_inv=_modulus(inv, t_lo, t_hi, gap),
            alpha_dot=_modulus(tm.derivative, s0, s_hi, gap),
            alpha_inv_dot=_modulus(inv_d, t_lo, t_hi, gap),
        ))

    rep = VerificationReport(scenario="time-map")
    rep.add("sup alpha'", "bounded-slope", C1, math.inf)
    rep.add("sup (alpha^-1)'", "bounded-inverse-slope", C2, math.inf)
    rep.add("chain rule residual", "chain-rule", chain, 1e-6)
    rep.add("max alpha(s) - (C1 s + k1)", "linear-growth", float(np.max(t_grid - (C1 * s_grid + k1))), 1e-12)
    rep.add("max alpha^-1(t) - (C2 t + k2)", "linear-growth", float(np.max(s_grid - (C2 * t_grid + k2))), 1e-12)
    rep.meta.update(C1=C1, C2=C2, k1=k1, k2=k2, moduli=table, horizon=(s0, s_hi))
    rep.runtime = time.perf_counter() - start
    return rep


def manifold_residual(p: Params, init: InitialData) -> float:
    """``|g'(t0) - f(t0, g(t0), g(t0 - eta0))|``; zero on the solution manifold."""
    t0 = init.t0
    g = init.g
    gd = g.eval_derivative(t0, "left")
    fv = np.atleast_1d(p.f(t0, g.eval(t0), g.eval(t0 - init.eta0)))
    return float(np.linalg.norm(gd - fv))


def solution_manifold_residual(sol: SddSolution, t: float) -> float:
    """Residual of the shifted datum ``(y_t, eta(t))`` taken as new initial data."""
    y = sol.y
    eta_t = float(sol.eta.eval(t)[0])
    yd = y.eval_derivative(t, "left")
    fv = np.atleast_1d(sol.params.f(t, y.eval(t), y.eval(t - eta_t)))
    return float(np.linalg.norm(yd - fv))


def boundedness_transfer_check(sdd: SddSolution, ts, t1: float, tol: float = 1e-5) -> VerificationReport:
    """``sup |y|`` on ``[t1, T]`` against ``sup |z|`` on ``[alpha^{-1}(t1), s_end]``, on a shared mesh."""
    tm = ts.alpha
    s = ts.mesh
    s = s[tm(s) <= sdd.T + 1e-12]
    s1 = float(alpha_inverse(tm, t1))
    s = s[s >= s1]
    sup_z = float(np.max(np.linalg.norm(ts.z.eval(s), axis=1)))
    sup_y = float(np.max(np.linalg.norm(sdd.y.eval(tm(s)), axis=1)))
    rep = VerificationReport(scenario=sdd.params.name or "scenario")
    rep.add("|sup|y| - sup|z||", "boundedness-transfer", abs(sup_y - sup_z), tol)
    rep.meta.update(sup_y=sup_y, sup_z=sup_z, s1=s1)
    return rep
