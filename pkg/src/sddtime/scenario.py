"""Scenario files: a closed catalog of right-hand sides, delay feedbacks and histories.

A scenario is a YAML mapping. Unknown keys are rejected so that a typo never
silently changes an experiment. See ``docs/scenario.md`` for the schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .sdd import InitialData, Params
from .trajectory import Trajectory

HISTORY_SEGMENTS = 1024


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario document."""


TOP_KEYS = {
    "name", "mu", "eta_bar", "eta0", "t0", "s0", "d0", "f", "G", "history", "T", "S", "dt", "ds",
    "h1", "checks", "deltas", "t1", "inject_alpha_shift",
}
F_KEYS = {
    "zero": set(),
    "linear": {"A", "B"},
    "scalar_negative_feedback": {"a", "b"},
    "tanh_feedback": {"a", "b"},
}
G_KEYS = {
    "zero": set(),
    "scaled_tanh": {"kappa", "w"},
    "scaled_sin": {"kappa", "w"},
}
HISTORY_KEYS = {
    "constant": {"value"},
    "cosine": {"value", "amplitude", "frequency"},
    "exponential": {"value", "rate"},
    "table": {"t", "y", "dy"},
}
CHECKS = {"equivalence", "delay_range", "sigma_monotone", "bounds", "time_equivalence",
          "process", "assumptions", "stability", "manifold", "boundedness"}
DEFAULT_CHECKS = ["equivalence", "delay_range", "sigma_monotone", "bounds", "time_equivalence",
                  "process", "assumptions"]


def _kind(section: Any, where: str, catalog: dict) -> tuple[str, dict]:
    if not isinstance(section, dict) or "kind" not in section:
        raise ScenarioError(f"{where}: expected a mapping with a 'kind' key")
    kind = section["kind"]
    if kind not in catalog:
        raise ScenarioError(f"{where}: unknown kind {kind!r}; choose from {sorted(catalog)}")
    extra = set(section) - {"kind"} - catalog[kind]
    if extra:
        raise ScenarioError(f"{where}: unknown keys {sorted(extra)} for kind {kind!r}")
    return kind, {k: v for k, v in section.items() if k != "kind"}


def build_rhs(section: dict, dim: int):
    """Return ``(f, lip_f)`` for a catalog entry."""
    kind, a = _kind(section, "f", F_KEYS)
    if kind == "zero":
        return (lambda t, y, yd: np.zeros_like(y)), 0.0
    if kind == "linear":
        A = np.atleast_2d(np.asarray(a.get("A", np.zeros((dim, dim))), dtype=float))
        B = np.atleast_2d(np.asarray(a.get("B", np.zeros((dim, dim))), dtype=float))
        if A.shape != (dim, dim) or B.shape != (dim, dim):
            raise ScenarioError(f"f: A and B must be {dim}x{dim}")
        lip = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2))
        return (lambda t, y, yd: A @ y + B @ yd), float(lip)
    ca, cb = float(a.get("a", 0.0)), float(a.get("b", 0.0))
    lip = max(abs(ca), abs(cb))
    if kind == "scalar_negative_feedback":
        return (lambda t, y, yd: -ca * y - cb * yd), lip
    return (lambda t, y, yd: -ca * y + cb * np.tanh(yd)), lip


def build_feedback(section: dict, dim: int):
    """Return ``(G, lip_G, g_sup)``; ``g_sup`` is exact for every catalog entry."""
    kind, a = _kind(section, "G", G_KEYS)
    if kind == "zero":
        return (lambda y: 0.0), 0.0, 0.0
    kappa = float(a["kappa"]) if "kappa" in a else 0.0
    w = np.broadcast_to(np.asarray(a.get("w", 1.0), dtype=float), (dim,)).copy()
    lip = abs(kappa) * float(np.linalg.norm(w))
    if kind == "scaled_tanh":
        return (lambda y: kappa * float(np.tanh(w @ y))), lip, abs(kappa)
    return (lambda y: kappa * float(np.sin(w @ y))), lip, abs(kappa)


def build_history(section: dict, t0: float, h: float) -> Trajectory:
    kind, a = _kind(section, "history", HISTORY_KEYS)
    if kind == "table":
        t = np.asarray(a["t"], dtype=float)
        y = np.asarray(a["y"], dtype=float)
        dy = np.asarray(a["dy"], dtype=float)
        if abs(t[-1] - t0) > 1e-12 or t[0] > t0 - h + 1e-12:
            raise ScenarioError("history table must span [t0 - h, t0]")
        return Trajectory.from_nodes(t, y, dy)
    value = np.atleast_1d(np.asarray(a.get("value", 1.0), dtype=float))
    if kind == "constant":
        return Trajectory.constant(value, t0 - h, t0)
    grid = np.linspace(t0 - h, t0, HISTORY_SEGMENTS + 1)
    grid[-1] = t0
    if kind == "cosine":
        amp, freq = float(a.get("amplitude", 0.0)), float(a.get("frequency", 1.0))
        return Trajectory.from_function(lambda s: value + amp * np.cos(freq * (s - t0)),
                                        lambda s: np.full_like(value, -amp * freq * np.sin(freq * (s - t0))),
                                        grid)
    rate = float(a.get("rate", 0.0))
    return Trajectory.from_function(lambda s: value * np.exp(rate * (s - t0)),
                                    lambda s: rate * value * np.exp(rate * (s - t0)), grid)


def _dim(doc: dict) -> int:
    hist = doc.get("history", {})
    if isinstance(hist, dict):
        if "value" in hist:
            return len(np.atleast_1d(hist["value"]))
        if "y" in hist:
            y = np.asarray(hist["y"], dtype=float)
            return 1 if y.ndim == 1 else y.shape[1]
    return 1


def _divides(step: float, h: float) -> bool:
    r = h / step
    return step > 0 and abs(r - round(r)) <= 1e-9 * r


@dataclass
class Scenario:
    name: str
    raw: dict
    params: Params
    initial: InitialData
    s0: float
    d0: Optional[float]
    T: float
    S: float
    dt: float
    ds: float
    h1: Optional[float] = None
    checks: list = field(default_factory=lambda: list(DEFAULT_CHECKS))
    deltas: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    t1: Optional[float] = None
    inject_alpha_shift: float = 0.0

    @property
    def digest(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def scenario_from_dict(doc: dict, dt: Optional[float] = None, ds: Optional[float] = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    extra = set(doc) - TOP_KEYS
    if extra:
        raise ScenarioError(f"unknown keys {sorted(extra)}")
    for key in ("mu", "eta_bar", "eta0", "f", "G", "history", "T", "S"):
        if key not in doc:
            raise ScenarioError(f"missing required key {key!r}")
    doc = dict(doc)
    if dt is not None:
        doc["dt"] = dt
    if ds is not None:
        doc["ds"] = ds
    doc.setdefault("dt", 1e-3)
    doc.setdefault("ds", doc["dt"])
    try:
        mu, eta_bar = float(doc["mu"]), float(doc["eta_bar"])
        h = 2 * eta_bar
        t0 = float(doc.get("t0", 0.0))
        dim = _dim(doc)
        f, lip_f = build_rhs(doc["f"], dim)
        G, lip_G, g_sup = build_feedback(doc["G"], dim)
        for key in ("dt", "ds"):
            if not _divides(float(doc[key]), h):
                raise ScenarioError(f"{key} = {doc[key]} must divide h = {h}")
        g = build_history(doc["history"], t0, h)
        checks = list(doc.get("checks", DEFAULT_CHECKS))
        unknown = set(checks) - CHECKS
        if unknown:
            raise ScenarioError(f"unknown checks {sorted(unknown)}")
        name = str(doc.get("name", "scenario"))
        params = Params(mu=mu, eta_bar=eta_bar, f=f, G=G, lip_f=lip_f, lip_G=lip_G, g_sup=g_sup,
                        dim=dim, name=name)
        return Scenario(
            name=name, raw=doc, params=params,
            initial=InitialData(g, float(doc["eta0"]), t0),
            s0=float(doc.get("s0", 0.0)),
            d0=None if doc.get("d0") is None else float(doc["d0"]),
            T=float(doc["T"]), S=float(doc["S"]), dt=float(doc["dt"]), ds=float(doc["ds"]),
            h1=None if doc.get("h1") is None else float(doc["h1"]),
            checks=checks,
            deltas=[float(x) for x in doc.get("deltas", [1e-2, 1e-3, 1e-4])],
            t1=None if doc.get("t1") is None else float(doc["t1"]),
            inject_alpha_shift=float(doc.get("inject_alpha_shift", 0.0)),
        )
    except (TypeError, KeyError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(path, dt: Optional[float] = None, ds: Optional[float] = None) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return scenario_from_dict(doc, dt=dt, ds=ds)
