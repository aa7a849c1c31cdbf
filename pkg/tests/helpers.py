"""Scenario builders shared by the test modules."""

import math

import numpy as np

from sddtime import InitialData, Params, Trajectory
from sddtime.scenario import scenario_from_dict


def s1_params():
    return Params(0.4, 1.0, f=lambda t, y, yd: -yd, G=lambda y: 0.2 * math.tanh(y[0]),
                  lip_f=1.0, lip_G=0.2, g_sup=0.2, name="S1")


def s1_initial():
    return InitialData(Trajectory.constant([1.0], -2.0, 0.0), 1.0, 0.0)


def constant_delay(t0=0.0, f=None):
    p = Params(0.4, 1.0, f=f or (lambda t, y, yd: -yd), G=lambda y: 0.0, lip_f=1.0, lip_G=0.0,
               g_sup=0.0, name="constant-delay")
    return p, InitialData(Trajectory.constant([1.0], t0 - 2.0, t0), 1.0, t0)


def decay():
    p = Params(0.4, 1.0, f=lambda t, y, yd: -0.5 * y, G=lambda y: 0.0, lip_f=0.5, lip_G=0.0,
               g_sup=0.0, name="decay")
    return p, InitialData(Trajectory.constant([1.0], -2.0, 0.0), 1.0, 0.0)


def _lambert_root(eta0):
    # real root of lam = -exp(-lam*eta0), exists for eta0 <= 1/e
    lam = -1.0
    for _ in range(100):
        F = lam + math.exp(-lam * eta0)
        dF = 1.0 - eta0 * math.exp(-lam * eta0)
        lam -= F / dF
    return lam


def smooth_compatible(eta0=0.25, nodes=2048):
    """``y' = -y(t - eta)`` with history ``exp(lam t)``, ``lam = -exp(-lam eta0)``.

    ``G = kappa tanh(y)`` with ``kappa`` chosen so that ``eta'(t0) = 0``; then
    both ``y'`` and ``y''`` are continuous at ``t0`` and fixed-step RK4 keeps
    its full order.
    """
    mu, eta_bar = 0.4, 1.0
    lam = _lambert_root(eta0)
    kappa = mu * (eta0 - eta_bar) / math.tanh(1.0)
    grid = np.linspace(-2.0, 0.0, nodes + 1)
    g = Trajectory.from_function(lambda t: np.array([math.exp(lam * t)]),
                                 lambda t: np.array([lam * math.exp(lam * t)]), grid)
    p = Params(mu, eta_bar, f=lambda t, y, yd: -yd, G=lambda y: kappa * math.tanh(y[0]),
               lip_f=1.0, lip_G=abs(kappa), g_sup=abs(kappa), name="smooth-compatible")
    return p, InitialData(g, eta0, 0.0), lam


def sweep_documents():
    """Twenty catalog scenarios with ``sup|G| <= mu*eta_bar``; some violate ``2 mu eta_bar < 1``."""
    fs = [
        {"kind": "scalar_negative_feedback", "a": 0.0, "b": 1.0},
        {"kind": "scalar_negative_feedback", "a": 0.5, "b": 0.3},
        {"kind": "tanh_feedback", "a": 1.0, "b": 2.0},
        {"kind": "linear", "A": [[0.1]], "B": [[-0.8]]},
        {"kind": "zero"},
    ]
    Gs = [
        lambda me: {"kind": "scaled_tanh", "kappa": me},
        lambda me: {"kind": "scaled_sin", "kappa": -0.5 * me},
        lambda me: {"kind": "zero"},
        lambda me: {"kind": "scaled_tanh", "kappa": -me, "w": 3.0},
    ]
    hists = [
        {"kind": "constant", "value": 1.0},
        {"kind": "cosine", "value": 0.2, "amplitude": 1.5, "frequency": 2.0},
        {"kind": "exponential", "value": -1.0, "rate": 0.7},
    ]
    mus = [(0.4, 1.0), (1.5, 1.0), (0.2, 0.5), (2.0, 0.75), (0.1, 2.0)]
    docs = []
    for i in range(20):
        mu, eb = mus[i % len(mus)]
        docs.append(dict(
            name=f"sweep-{i}", mu=mu, eta_bar=eb,
            eta0=[0.0, eb, 2 * eb, 0.3 * eb][i % 4],
            f=fs[i % len(fs)], G=Gs[(i // 5) % len(Gs)](mu * eb), history=hists[i % len(hists)],
            T=8.0, S=4 * eb, dt=eb / 8,
        ))
    return docs


def sweep_scenarios():
    return [scenario_from_dict(d) for d in sweep_documents()]
