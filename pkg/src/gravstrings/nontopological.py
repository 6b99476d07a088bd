"""Symmetric non-topological solutions by two-sided shooting from the apex.

With ``c = 2 - 2aN > 0`` the radial equation in t = ln r reads

    v'' = beta e^{c t} f(v),     v(t0) = -alpha,  v'(t0) = 0,

and the origin condition becomes ``eta(t0, alpha) := lim_{t->-inf} v'(t) = 2N``.
For fixed alpha, ``t0`` is found by bisection between two explicit envelopes
(an upper bound K(t0) on eta and a closed-form lower bound), and the tail slope
``k = -lim_{t->inf} v'(t)`` is read off a forward integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    BlowUp,
    BracketNotFound,
    IntegrationFailure,
    ParameterError,
    PositivityBreach,
    RegimeMismatch,
    SlopeBoundViolated,
    TailNotConverged,
    UnprovenAlpha,
)
from .model import ModelParams, Regime, alpha_threshold
from .radial import NONTOPOLOGICAL, RadialSolution

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-14
TAIL_TOL = 1e-10
SOURCE_TOL = 1e-14
MAX_SPAN = 200.0


@dataclass(frozen=True)
class ShootingRecord:
    alpha: float
    t0: float
    eta: float
    bracket: tuple[float, float]
    k: float | None
    K_bound: float
    iterations: list = field(default_factory=list, repr=False)
    proven_regime: bool = True
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "t0": self.t0, "eta": self.eta,
            "bracket": list(self.bracket), "k": self.k, "K_bound": self.K_bound,
            "n_iterations": len(self.iterations), "proven_regime": self.proven_regime,
            "tolerances": dict(self.tolerances),
        }


def _c(params: ModelParams) -> float:
    return 2.0 - 2.0 * params.aN


def _check_regime(params: ModelParams) -> None:
    if params.regime is not Regime.NONTOPOLOGICAL_PLANE or not params.aN < 1.0:
        raise RegimeMismatch("non-topological shooting requires a N < 1")


def K_bound(t0: float, alpha: float, params: ModelParams) -> float:
    """Upper bound on v' for t < t0 (and hence on eta)."""
    c = _c(params)
    return math.sqrt(c * c + 2.0 * params.beta * math.exp(c * t0 - alpha)) - c


def eta_lower_bound(t0: float, alpha: float, params: ModelParams) -> float:
    """Closed-form lower bound on eta, valid for alpha >= alpha_threshold(a)."""
    a, beta, c = params.a, params.beta, _c(params)
    K = K_bound(t0, alpha, params)
    num = beta * math.exp(c * t0 - a * (alpha + math.exp(-alpha)) - alpha) * (-math.expm1(-alpha))
    return num / (c + (a + 2.0) * K)


def t0_for_K(target: float, alpha: float, params: ModelParams) -> float:
    """Invert K(t0, alpha) = target for t0."""
    c = _c(params)
    return (alpha + math.log((target * target + 2.0 * c * target) / (2.0 * params.beta))) / c


def _rhs_factory(params: ModelParams):
    a, beta, c = params.a, params.beta, _c(params)

    def rhs(t, y):
        v = y[0] if y[0] < 300.0 else 300.0
        ev = math.exp(v)
        return [y[1], beta * math.exp(c * t + a * (v - ev) + v) * math.expm1(v)]

    return rhs


def _solve(params, t0, alpha, t_end, rtol, atol, event):
    res = integrate.solve_ivp(
        _rhs_factory(params), (t0, t_end), [-alpha, 0.0], method="DOP853",
        rtol=rtol, atol=atol, dense_output=True, events=event,
    )
    if res.status < 0:
        raise IntegrationFailure(res.message)
    if np.any(res.y[0] >= 0.0):
        raise PositivityBreach(f"v >= 0 reached from apex t0={t0}, alpha={alpha}")
    if np.any(np.abs(res.y[1]) > 1e8):
        raise BlowUp(f"|v'| exceeded 1e8 from apex t0={t0}, alpha={alpha}")
    return res


def _backward(params, t0, alpha, rtol, atol, tail_tol, min_span=1.0):
    """Integrate towards -inf until the neglected part of eta is below ``tail_tol``.

    For s < t the solution satisfies v(s) <= v(t) and |f(v)| <= e^{(1+a) v},
    so the remaining integral is at most beta e^{c t + (1+a) v(t)} / c.
    """
    a, beta, c = params.a, params.beta, _c(params)
    log_scale = math.log(beta / c) - math.log(tail_tol)

    def tail_small(t, y):
        if t > t0 - min_span:
            return 1.0
        return log_scale + c * t + (1.0 + a) * y[0]

    tail_small.terminal = True
    tail_small.direction = -1
    res = _solve(params, t0, alpha, t0 - MAX_SPAN, rtol, atol, tail_small)
    if res.status != 1:
        raise TailNotConverged(f"tail bound not met before t0 - {MAX_SPAN}")
    t_lo = float(res.t[-1])
    bound = beta * math.exp(c * t_lo + (1.0 + a) * res.y[0, -1]) / c
    return res, bound


def _forward(params, t0, alpha, rtol, atol, source_tol):
    a, beta, c = params.a, params.beta, _c(params)
    log_tol = math.log(source_tol / beta)

    def source_small(t, y):
        if t < t0 + 1.0:
            return 1.0
        return c * t + (1.0 + a) * y[0] - log_tol

    source_small.terminal = True
    source_small.direction = -1
    res = _solve(params, t0, alpha, t0 + MAX_SPAN, rtol, atol, source_small)
    if res.status != 1:
        raise TailNotConverged(f"forward source did not decay below {source_tol}")
    return res


def eta_of(t0: float, alpha: float, params: ModelParams, *, rtol: float = DEFAULT_RTOL,
           atol: float = DEFAULT_ATOL, tail_tol: float = TAIL_TOL,
           return_bound: bool = False):
    """Backward limit of v' for the apex data (t0, alpha)."""
    _check_regime(params)
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    res, bound = _backward(params, t0, alpha, rtol, atol, tail_tol)
    eta = float(res.y[1, -1])
    return (eta, bound) if return_bound else eta


def integrate_from_apex(t0: float, alpha: float, params: ModelParams, t_span=None, *,
                        rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                        tail_tol: float = TAIL_TOL, source_tol: float = SOURCE_TOL,
                        n_out: int = 2000) -> RadialSolution:
    """Global trajectory through the apex, integrated in both directions.

    Without ``t_span`` the ends are chosen by the tail bounds (backward) and by
    the decay of the source term (forward).  The returned diagnostics keep the
    accepted backward nodes for the a priori envelope checks.
    """
    _check_regime(params)
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    if t_span is None:
        back, tail = _backward(params, t0, alpha, rtol, atol, tail_tol)
        fwd = _forward(params, t0, alpha, rtol, atol, source_tol)
    else:
        t_lo, t_hi = t_span
        if not t_lo < t0 < t_hi:
            raise ParameterError("t_span must contain t0")
        back = _solve(params, t0, alpha, t_lo, rtol, atol, None)
        fwd = _solve(params, t0, alpha, t_hi, rtol, atol, None)
        tail = math.nan
    t_lo, t_hi = float(back.t[-1]), float(fwd.t[-1])
    a, beta, c = params.a, params.beta, _c(params)

    def dense(t):
        t = np.asarray(t, dtype=float)
        y = np.where(t <= t0, back.sol(np.clip(t, t_lo, t0)), fwd.sol(np.clip(t, t0, t_hi)))
        v, vp = y[0], y[1]
        ev = np.exp(np.minimum(v, 300.0))
        vpp = beta * np.exp(c * t + a * (v - ev) + v) * np.expm1(v)
        return v, vp, vpp

    t = np.linspace(t_lo, t_hi, n_out)
    t = np.union1d(t, [t0])
    v, vp, vpp = dense(t)
    return RadialSolution(
        kind=NONTOPOLOGICAL, t=t, v=v, v_prime=vp, v_second=vpp, params=params,
        asymptotics={"t0": t0, "alpha": alpha, "eta": float(back.y[1, -1]),
                     "k": float(-fwd.y[1, -1])},
        diagnostics={
            "tail_bound": tail,
            "backward_t": back.t, "backward_v": back.y[0], "backward_vp": back.y[1],
            "forward_t": fwd.t, "forward_v": fwd.y[0], "forward_vp": fwd.y[1],
            "n_rhs_evals": int(back.nfev + fwd.nfev),
        },
        tolerances={"rtol": rtol, "atol": atol, "tail_tol": tail_tol, "source_tol": source_tol},
        dense=dense,
    )


def sandwich_gaps(sol: RadialSolution, params: ModelParams) -> tuple[float, float]:
    """Smallest margins of ``-alpha - K (t0 - t) < v(t) < -alpha`` over backward nodes with t < t0.

    Returns ``(upper, lower)``; both are positive when the envelope holds.
    """
    t0, alpha = sol.asymptotics["t0"], sol.asymptotics["alpha"]
    t = np.asarray(sol.diagnostics["backward_t"])
    v = np.asarray(sol.diagnostics["backward_v"])
    mask = t < t0
    K = K_bound(t0, alpha, params)
    upper = float(np.min(-alpha - v[mask]))
    lower = float(np.min(v[mask] + alpha + K * (t0 - t[mask])))
    return upper, lower


def find_bracket(alpha: float, params: ModelParams, eta=None, t_limit: float = 100.0):
    """Bracket [t_low, t_high] with eta - 2N negative at t_low and positive at t_high."""
    target = 2.0 * params.N
    if eta is None:
        eta = lambda t0: eta_of(t0, alpha, params)  # noqa: E731
    t_low = t0_for_K(target, alpha, params) - 5.0
    if not -t_limit <= t_low <= t_limit:
        raise BracketNotFound(f"K envelope gives t0'={t_low} outside +-{t_limit}")
    t_high = t_low + 5.0
    while eta_lower_bound(t_high, alpha, params) <= target:
        t_high += 1.0
        if t_high > t_limit:
            raise BracketNotFound("lower envelope never exceeds 2N")
    e_low, e_high = eta(t_low), eta(t_high)
    if not (e_low < target < e_high):
        raise BracketNotFound(
            f"envelopes gave eta({t_low})={e_low}, eta({t_high})={e_high} around {target}"
        )
    return (t_low, e_low), (t_high, e_high)


def shoot_t0(alpha: float, params: ModelParams, tol: float = 1e-8, *,
             rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
             allow_unproven_alpha: bool = False, max_iter: int = 200) -> ShootingRecord:
    """Find t0 with |eta(t0, alpha) - 2N| < tol by bracketing bisection.

    eta is continuous but not known to be monotone in t0, so only sign
    information is used.
    """
    _check_regime(params)
    threshold = alpha_threshold(params.a)
    proven = alpha >= threshold
    if not proven and not allow_unproven_alpha:
        raise UnprovenAlpha(f"alpha={alpha} is below the threshold {threshold}")
    target = 2.0 * params.N

    def eta(t0):
        return eta_of(t0, alpha, params, rtol=rtol, atol=atol)

    (lo, e_lo), (hi, e_hi) = find_bracket(alpha, params, eta)
    bracket = (lo, hi)
    history = [(lo, e_lo), (hi, e_hi)]
    best = min(history, key=lambda h: abs(h[1] - target))
    for _ in range(max_iter):
        if abs(best[1] - target) < tol:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        e_mid = eta(mid)
        history.append((mid, e_mid))
        if abs(e_mid - target) < abs(best[1] - target):
            best = (mid, e_mid)
        if e_mid < target:
            lo = mid
        else:
            hi = mid
    t0, e = best
    if abs(e - target) >= tol:
        raise BracketNotFound(f"bisection stalled at |eta - 2N| = {abs(e - target):.3e}")
    return ShootingRecord(
        alpha=alpha, t0=t0, eta=e, bracket=bracket, k=None,
        K_bound=K_bound(t0, alpha, params), iterations=history, proven_regime=proven,
        tolerances={"tol": tol, "rtol": rtol, "atol": atol},
    )


def slope_bound(params: ModelParams) -> float:
    """4 + 2N - 4aN."""
    return 4.0 + 2.0 * params.N - 4.0 * params.aN


def tail_slope_k(sol: RadialSolution, params: ModelParams, tol: float = 1e-6, *,
                 check: bool = True) -> float:
    """k = -v'(t_hi), optionally asserting k > 4 + 2N - 4aN and the energy inequality.

    The lower bound does not hold for every parameter set: the last integral
    of the energy identity can be negative when a > 0, so ``check=False``
    returns k without judging it.
    """
    k = float(-sol.v_prime[-1])
    if not k > 0:
        raise SlopeBoundViolated(f"tail slope k={k} is not positive")
    if check:
        if not k > slope_bound(params) - tol:
            raise SlopeBoundViolated(
                f"k={k} is not above 4 + 2N - 4aN = {slope_bound(params)}")
        margin = energy_inequality_margin(k, params)
        if not margin > -tol:
            raise SlopeBoundViolated(f"energy inequality fails with margin {margin}")
    return k


def energy_inequality_margin(k: float, params: ModelParams) -> float:
    N, c = params.N, _c(params)
    return 0.5 * (k * k - 4.0 * N * N) - c * (k + 2.0 * N)


def energy_identity_terms(sol: RadialSolution, params: ModelParams) -> dict:
    """The three integrals on the right of the energy identity, by quadrature of the dense output."""
    if sol.dense is None:
        raise ValueError("energy identity needs a solution with dense output")
    a, beta, c = params.a, params.beta, _c(params)
    t_lo, t_hi = float(sol.t[0]), float(sol.t[-1])
    t0 = float(sol.asymptotics.get("t0", sol.t[np.argmax(sol.v)]))

    def weight(t, v):
        return beta * math.exp(c * t + a * (v - math.exp(v)) + v)

    def term1(t):
        v, _, _ = sol.dense(np.array([t]))
        return c * weight(t, v[0]) * (-math.expm1(v[0]))

    def term2(t):
        v, _, _ = sol.dense(np.array([t]))
        return 0.5 * c * weight(t, v[0]) * math.exp(v[0])

    def term3(t):
        v, vp, _ = sol.dense(np.array([t]))
        ev = math.exp(v[0])
        return a * weight(t, v[0]) * (1.0 - ev) * (1.0 - 0.5 * ev) * vp[0]

    out = {}
    for name, fn in (("first", term1), ("second", term2), ("third", term3)):
        total = 0.0
        for lo, hi in ((t_lo, t0), (t0, t_hi)):
            total += integrate.quad(fn, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500)[0]
        out[name] = total
    return out


def energy_identity_residual(sol: RadialSolution, params: ModelParams,
                             k: float | None = None) -> float:
    """Relative mismatch between (k^2 - 4N^2)/2 and the three-term right-hand side."""
    if k is None:
        k = float(-sol.v_prime[-1])
    lhs = 0.5 * (k * k - 4.0 * params.N**2)
    terms = energy_identity_terms(sol, params)
    rhs = terms["first"] + terms["second"] + terms["third"]
    return abs(lhs - rhs) / abs(lhs)


def solve_nontopological(alpha: float, params: ModelParams, tol: float = 1e-8, *,
                         rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                         allow_unproven_alpha: bool = False, n_out: int = 2000,
                         check_slope_bound: bool = False):
    """Shoot for t0, integrate the converged trajectory, and extract k.

    Whether k clears ``4 + 2N - 4aN`` is recorded in ``sol.diagnostics`` and
    only enforced with ``check_slope_bound``.
    """
    rec = shoot_t0(alpha, params, tol, rtol=rtol, atol=atol,
                   allow_unproven_alpha=allow_unproven_alpha)
    sol = integrate_from_apex(rec.t0, alpha, params, rtol=rtol, atol=atol, n_out=n_out)
    k = tail_slope_k(sol, params, check=check_slope_bound)
    sol.diagnostics["slope_bound"] = slope_bound(params)
    sol.diagnostics["slope_bound_holds"] = bool(k > slope_bound(params))
    sol.diagnostics["energy_inequality_margin"] = energy_inequality_margin(k, params)
    rec = ShootingRecord(**{**rec.__dict__, "k": k})
    return rec, sol
