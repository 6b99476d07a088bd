"""Symmetric topological solution under a N = 1.

In t = ln r the problem is ``v'' = beta f(v)`` with ``v'(-inf) = 2N`` and
``v(+inf) = 0``.  Multiplying by v' gives the first integral
``(v')^2 = F(v) = 4N^2 - 2H(v)``, and with beta pinned so that F(0) = 0 the
solution is obtained by marching ``v' = sqrt(F(v))`` from a seed deep in the
core.  The second-order form is integrated independently as a cross-check.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import (
    CrossCheckFailure,
    IntegrationFailure,
    NotMonotone,
    SeedNotConverged,
    WindowTooShort,
)
from .model import (
    ModelParams,
    PotentialTable,
    _check_topological,
    first_integral_F,
    nonlinearity_f,
)
from .radial import TOPOLOGICAL, RadialSolution


class Seed(NamedTuple):
    v: float
    v_prime: float
    correction: float


def _h(v: float, a: float, beta: float) -> float:
    return beta * float(nonlinearity_f(v, a))


def asymptotic_seed(t_min: float, params: ModelParams, max_correction: float = 1e-8) -> Seed:
    """Initial data at ``t_min`` from one Picard step of the integral equation.

    With ``w = v - 2N t``, the map ``w -> int_{-inf}^t (t - tau) h(2N tau + w) dtau``
    applied to ``w = 0`` gives the correction ``w_1``.  Its size is the
    truncation error of starting at a finite t.
    """
    a, beta, N = params.a, params.beta, params.N

    def g(tau):
        return _h(2.0 * N * tau, a, beta)

    w1 = integrate.quad(lambda tau: (t_min - tau) * g(tau), -np.inf, t_min,
                        epsabs=0.0, epsrel=1e-10, limit=200)[0]
    w1p = integrate.quad(g, -np.inf, t_min, epsabs=0.0, epsrel=1e-10, limit=200)[0]
    if not abs(w1) <= max_correction:
        raise SeedNotConverged(
            f"Picard correction {w1!r} at t_min={t_min} exceeds {max_correction}"
        )
    return Seed(2.0 * N * t_min + w1, 2.0 * N + w1p, abs(w1))


def picard_envelope(t: float, params: ModelParams) -> float:
    """Closed-form bound on |T(0)(t)|: beta e^{2N(1+a)t} / (2N(1+a))^2."""
    q = 2.0 * params.N * (1.0 + params.a)
    return params.beta * math.exp(q * t) / q**2


def integrate_topological(
    params: ModelParams,
    t_min: float = -30.0,
    t_max: float = 20.0,
    step_tol: float = 1e-12,
    *,
    n_out: int = 2000,
    switch_tol: float = 1e-10,
    cross_check_until: float = 1e-4,
    cross_check_tol: float = 1e-6,
    table: PotentialTable | None = None,
) -> RadialSolution:
    """March ``v' = sqrt(F(v))`` from the seed at ``t_min`` to ``t_max``.

    Once ``|v| < switch_tol`` the linearised solution
    ``v(t*) exp(-sqrt(beta e^{-a}) (t - t*))`` is used.  The second-order form
    is integrated from the same seed until ``v > -cross_check_until``; beyond
    that v = 0 is a saddle and independent trajectories separate
    exponentially, so the comparison is confined to that range.
    """
    _check_topological(params)
    a, beta = params.a, params.beta
    mu = math.sqrt(beta * math.exp(-a))
    seed = asymptotic_seed(t_min, params)
    if table is None:
        table = PotentialTable.build(params)
    atol = 1e-20

    def rhs(t, y):
        return [math.sqrt(table.F(y[0]))]

    def reached_zero(t, y):
        return y[0] + switch_tol

    reached_zero.terminal = True
    reached_zero.direction = 1

    res = integrate.solve_ivp(rhs, (t_min, t_max), [seed.v], method="DOP853",
                              rtol=step_tol, atol=atol, dense_output=True,
                              events=reached_zero)
    if res.status < 0:
        raise IntegrationFailure(res.message)
    t_switch = float(res.t[-1]) if res.status == 1 else math.inf
    v_switch = float(res.y[0, -1])
    nodes_t, nodes_v = res.t, res.y[0]

    def dense(t):
        t = np.asarray(t, dtype=float)
        v = np.empty_like(t)
        inner = t <= t_switch
        if np.any(inner):
            v[inner] = res.sol(np.minimum(t[inner], res.t[-1]))[0]
        outer = ~inner
        v[outer] = v_switch * np.exp(-mu * (t[outer] - t_switch))
        vp = np.array([math.sqrt(table.F(x)) for x in v])
        vp[outer] = -mu * v[outer]
        vpp = beta * nonlinearity_f(v, a)
        return v, vp, vpp

    t = np.linspace(t_min, t_max, n_out)
    v, vp, vpp = dense(t)
    if np.any(v >= 0) or np.any(vp <= 0) or np.any(np.diff(v) <= 0):
        raise NotMonotone("topological trajectory lost monotonicity or reached v = 0")
    if np.any(nodes_v >= 0):
        raise NotMonotone("an accepted step reached v >= 0")

    # first-integral residual at accepted steps, against direct quadrature of F
    node_vp2 = np.array([table.F(x) for x in nodes_v])
    F_direct = first_integral_F(nodes_v, params)
    fi_residual = float(np.max(np.abs(node_vp2 - F_direct)))

    # independent second-order integration
    def rhs2(t, y):
        return [y[1], _h(y[0], a, beta)]

    def stop2(t, y):
        return y[0] + cross_check_until

    stop2.terminal = True
    stop2.direction = 1
    res2 = integrate.solve_ivp(rhs2, (t_min, t_max), [seed.v, seed.v_prime],
                               method="DOP853", rtol=step_tol, atol=atol,
                               dense_output=True, events=stop2)
    if res2.status < 0:
        raise IntegrationFailure(res2.message)
    t_cross = float(res2.t[-1])
    mask = t <= t_cross
    discrepancy = float(np.max(np.abs(res2.sol(t[mask])[0] - v[mask])))
    energy2 = float(np.max(np.abs(
        res2.y[1] ** 2 - first_integral_F(np.minimum(res2.y[0], 0.0), params)
    )))
    if discrepancy > cross_check_tol:
        raise CrossCheckFailure(
            f"first- and second-order trajectories differ by {discrepancy:.3e}"
        )

    return RadialSolution(
        kind=TOPOLOGICAL,
        t=t, v=v, v_prime=vp, v_second=vpp, params=params,
        asymptotics={"decay_rate_limit": mu, "t_switch": t_switch},
        diagnostics={
            "seed_correction": seed.correction,
            "first_integral_residual": fi_residual,
            "second_order_energy_residual": energy2,
            "cross_check_discrepancy": discrepancy,
            "cross_check_until_t": t_cross,
            "n_accepted_steps": int(nodes_t.size - 1),
            "n_rhs_evals": int(res.nfev),
            "accepted_t": nodes_t,
            "accepted_v": nodes_v,
        },
        tolerances={
            "step_tol": step_tol, "atol": atol, "switch_tol": switch_tol,
            "cross_check_tol": cross_check_tol, "cross_check_until": cross_check_until,
            "table_nodes": int(table.grid.size),
        },
        dense=dense,
    )


def default_decay_window(sol: RadialSolution, v_hi: float = 1e-2, span: float = 5.0):
    idx = np.flatnonzero(np.abs(sol.v) < v_hi)
    if idx.size == 0:
        raise WindowTooShort("solution never enters |v| < 1e-2")
    t_lo = float(sol.t[idx[0]])
    return t_lo, min(t_lo + span, float(sol.t[-1]))


def _loglinear_fit(t, y):
    slope, intercept = np.polyfit(t, y, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def fit_decay_exponent(sol: RadialSolution, window=None, *, quantity: str = "v"):
    """Least-squares decay rate of ln|v| (or ln|v'|) against t over ``window``.

    Returns ``(exponent, r_squared)`` with the exponent positive for decay.
    """
    if window is None:
        window = default_decay_window(sol)
    t_lo, t_hi = window
    mask = (sol.t >= t_lo) & (sol.t <= t_hi)
    if np.count_nonzero(mask) < 20:
        raise WindowTooShort(f"only {np.count_nonzero(mask)} nodes in window {window}")
    y = sol.v if quantity == "v" else sol.v_prime
    slope, r2 = _loglinear_fit(sol.t[mask], np.log(np.abs(y[mask])))
    return -slope, r2


def implicit_quadrature_oracle(params: ModelParams, t_ref: float, v_ref: float,
                               t_probe, F=None):
    """Solve ``int_{v_ref}^{v} dv / sqrt(F(v)) = t - t_ref`` for v at each probe t.

    ``F`` defaults to ``-2 beta int_v^0 f``, which with beta pinned equals the
    first integral and, unlike ``4N^2 - 2H(v)``, keeps full relative accuracy
    as v -> 0.  Callers may pass another evaluation.
    """
    from scipy.optimize import brentq

    if F is None:
        _check_topological(params)

        def F(x):
            return -2.0 * params.beta * integrate.quad(
                lambda w: float(nonlinearity_f(w, params.a)), x, 0.0,
                epsabs=0.0, epsrel=1e-13, limit=200)[0]

    def travel(v_lo, v_hi):
        # in s = ln|v| the integrand |v| / sqrt(F) is smooth and tends to 1/mu at v = 0
        return integrate.quad(lambda s: math.exp(s) / math.sqrt(F(-math.exp(s))),
                              math.log(-v_hi), math.log(-v_lo),
                              epsabs=0.0, epsrel=1e-11, limit=400)[0]

    out = []
    t_cur, v_cur = t_ref, v_ref
    for tp in np.sort(np.asarray(t_probe, dtype=float)):
        dt = tp - t_cur

        def g(x):
            return travel(v_cur, x) - dt

        # v advances at most 2N per unit t, and by less than six decades of |v|
        # per probe spacing below 13.8 / mu
        hi = min(v_cur + 2.0 * params.N * dt * 1.0001, v_cur * 1e-6)
        v_new = brentq(g, v_cur, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        out.append(v_new)
        t_cur, v_cur = tp, v_new
    return np.array(out)
