"""Physical quantities reconstructed from a solved profile.

Planar profiles are radial and live on a t = ln r grid, so for radial
functions ``Delta = e^{-2t} d^2/dt^2`` and ``dx = 2 pi e^{2t} dt``.  The
conformal factor is

    e^eta = lam (e^{v - e^v} r^{-2N})^a,

and with ``F12 = 2 e^eta e^v (1 - e^v) / kappa^2`` the energy density obeys
``4 e^eta H = (e^v - 1) Delta v + e^v |grad v|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import FluxMismatch, NegativeDensity, TailNotIntegrable
from .model import ModelParams, Regime
from .radial import RadialSolution

FLUX_RTOL = 1e-3
EINSTEIN_T_MIN = -5.0


@dataclass(frozen=True)
class ObservableProfile:
    t: np.ndarray
    r: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    e_eta: np.ndarray
    energy_density: np.ndarray
    gauss_curvature: np.ndarray
    F12: np.ndarray
    totals: dict = field(default_factory=dict)

    def columns(self) -> dict:
        """Columns in the order of the trajectory CSV."""
        return {"t": self.t, "r": self.r, "v": self.v, "v_prime": self.v_prime,
                "e_eta": self.e_eta, "H": self.energy_density, "K_eta": self.gauss_curvature,
                "F12": self.F12}


# ---------------------------------------------------------------------------
# pointwise fields


def metric_factor(t, v, params: ModelParams) -> np.ndarray:
    """e^eta on the plane with all N strings at the origin.

    The combination ``v - 2N t`` stays bounded at the origin, so it is formed
    before exponentiating.
    """
    t, v = np.asarray(t, dtype=float), np.asarray(v, dtype=float)
    return params.lam * np.exp(params.a * (v - np.exp(v) - 2.0 * params.N * t))


def energy_density(t, v, v_prime, v_second, e_eta) -> np.ndarray:
    """H = e^{-eta} e^{-2t} [(e^v - 1) v'' + e^v v'^2] / 4 with v'' from the equation."""
    ev = np.exp(v)
    H = np.exp(-2.0 * np.asarray(t)) * ((ev - 1.0) * v_second + ev * v_prime**2) / (4.0 * e_eta)
    floor = -1e-9 * max(1.0, float(np.max(np.abs(H))))
    if np.any(H < floor):
        raise NegativeDensity(f"energy density reaches {float(np.min(H)):.3e}")
    return H


def energy_density_from_field(t, v, v_prime, e_eta, F12) -> np.ndarray:
    """The same density from F12: H = e^{-eta} [2 F12 (1 - e^v) + e^v |grad v|^2] / 4."""
    ev = np.exp(v)
    grad2 = np.exp(-2.0 * np.asarray(t)) * v_prime**2
    return (2.0 * F12 * (1.0 - ev) + ev * grad2) / (4.0 * e_eta)


def magnetic_field(v, e_eta, params: ModelParams) -> np.ndarray:
    """F12 = 2 e^eta e^v (1 - e^v) / kappa^2 (smooth part, upper sign branch)."""
    ev = np.exp(v)
    return 2.0 * e_eta * ev * (1.0 - ev) / params.kappa**2


def gauss_curvature(t, e_eta) -> np.ndarray:
    """K = -e^{-eta} Delta eta / 2 from central second differences of eta on a uniform t-grid.

    The two end nodes are NaN.
    """
    t = np.asarray(t, dtype=float)
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ValueError("gauss_curvature needs a uniform t-grid")
    eta = np.log(e_eta)
    d2 = np.full_like(eta, np.nan)
    d2[1:-1] = (eta[2:] - 2.0 * eta[1:-1] + eta[:-2]) / h[0] ** 2
    return -0.5 * np.exp(-eta) * np.exp(-2.0 * t) * d2


def einstein_residual(t, K, H, params: ModelParams, t_min: float = EINSTEIN_T_MIN) -> float:
    """sup |K - 8 pi G H| over finite nodes with t >= t_min.

    Close to the origin the factor e^{-2t} amplifies round-off in the second
    difference, so those nodes are excluded.
    """
    t = np.asarray(t)
    mask = np.isfinite(K) & (t >= t_min)
    return float(np.max(np.abs(K[mask] - 2.0 * params.a * H[mask])))


# ---------------------------------------------------------------------------
# integrals


def _tail_rate(t, y):
    """Exponential decay rate of y towards the end of ``t`` from a log-linear fit."""
    y = np.abs(y)
    ok = y > 0
    if np.count_nonzero(ok) < 3:
        return math.inf
    slope = np.polyfit(t[ok], np.log(y[ok]), 1)[0]
    return float(slope)


def integrate_with_tails(t, y, n_fit: int = 20):
    """int y dt over the grid plus exponential tail estimates beyond both ends.

    Returns ``(total, body, left_tail, right_tail)``.
    """
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    body = float(integrate.simpson(y, x=t))
    tails = []
    for sl, sign in ((slice(0, n_fit), 1.0), (slice(-n_fit, None), -1.0)):
        tt, yy = t[sl], y[sl]
        end_val = yy[0] if sign > 0 else yy[-1]
        if end_val == 0.0:
            tails.append(0.0)
            continue
        rate = _tail_rate(tt, yy) * sign
        if not rate > 0:
            raise TailNotIntegrable(f"integrand does not decay at the {'left' if sign > 0 else 'right'} end")
        tails.append(end_val / rate)
    return body + tails[0] + tails[1], body, tails[0], tails[1]


def total_energy(t, H, e_eta) -> dict:
    """E = 2 pi int H e^eta r^2 dt, body plus tails reported separately."""
    t = np.asarray(t)
    total, body, left, right = integrate_with_tails(t, 2.0 * math.pi * H * e_eta * np.exp(2.0 * t))
    return {"energy": total, "body": body, "left_tail": left, "right_tail": right}


def flux(t, F12, v_prime_end: float, params: ModelParams, rtol: float = FLUX_RTOL) -> dict:
    """Total flux by quadrature of F12 and by the boundary formula 2 pi N - pi lim r v_r."""
    t = np.asarray(t)
    quad, body, left, right = integrate_with_tails(t, 2.0 * math.pi * F12 * np.exp(2.0 * t))
    boundary = 2.0 * math.pi * params.N - math.pi * v_prime_end
    rel = abs(quad - boundary) / abs(boundary)
    if rel > rtol:
        raise FluxMismatch(f"flux quadrature {quad} vs boundary formula {boundary} (rel {rel:.2e})")
    return {"flux": quad, "flux_boundary": boundary, "relative_mismatch": rel,
            "body": body, "left_tail": left, "right_tail": right}


def completeness_check(params: ModelParams):
    """``(holds, margin)`` for N <= 1/(4 pi G); ``holds`` is None on the sphere, where it does not apply."""
    margin = 1.0 / params.a - params.N
    if params.regime is Regime.COMPACT_SPHERE:
        return None, margin
    return bool(margin >= -1e-12 * params.N), margin


def metric_tail_slope(t, e_eta, window) -> float:
    """Least-squares slope of ln e^eta against ln r = t over ``window``."""
    t = np.asarray(t)
    mask = (t >= window[0]) & (t <= window[1])
    return float(np.polyfit(t[mask], np.log(e_eta[mask]), 1)[0])


def expected_tail_slope(params: ModelParams, k: float | None = None) -> float:
    """-2aN when v -> 0 at infinity, -a(k + 2N) when v ~ -k ln r."""
    if k is None:
        return -2.0 * params.aN
    return -params.a * (k + 2.0 * params.N)


# ---------------------------------------------------------------------------
# assembled profiles


def planar_observables(sol: RadialSolution, n: int | None = None, *,
                       einstein_t_min: float = EINSTEIN_T_MIN) -> ObservableProfile:
    """All planar observables on a uniform t-grid (``n`` nodes, default the solution's)."""
    params = sol.params
    if sol.dense is not None:
        sol = sol.resample(n or sol.t.size)
    t, v, vp, vpp = sol.t, sol.v, sol.v_prime, sol.v_second
    e_eta = metric_factor(t, v, params)
    H = energy_density(t, v, vp, vpp, e_eta)
    F12 = magnetic_field(v, e_eta, params)
    H_alt = energy_density_from_field(t, v, vp, e_eta, F12)
    # normwise: in the topological tail H is a cancellation of O(v^2) terms
    scale = float(np.max(np.abs(H)))
    K = gauss_curvature(t, e_eta)
    fl = flux(t, F12, float(vp[-1]), params)
    en = total_energy(t, H, e_eta)
    holds, margin = completeness_check(params)
    k = sol.asymptotics.get("k")
    t_hi = float(t[-1])
    window = (t_hi - 0.25 * (t_hi - t[0]), t_hi)
    totals = {
        "flux": fl["flux"], "flux_boundary": fl["flux_boundary"],
        "flux_relative_mismatch": fl["relative_mismatch"],
        "energy": en["energy"], "energy_body": en["body"],
        "energy_tails": en["left_tail"] + en["right_tail"],
        "einstein_residual_sup": einstein_residual(t, K, H, params, einstein_t_min),
        "einstein_t_min": einstein_t_min,
        "density_cross_check": float(np.max(np.abs(H - H_alt) / scale)),
        "metric_tail_slope": metric_tail_slope(t, e_eta, window),
        "metric_tail_expected": expected_tail_slope(params, k),
        "completeness_holds": holds, "completeness_margin": margin,
    }
    return ObservableProfile(t=t, r=np.exp(t), v=v, v_prime=vp, e_eta=e_eta, energy_density=H,
                             gauss_curvature=K, F12=F12, totals=totals)


def sphere_observables(sol) -> dict:
    """Metric factor, F12, flux and energy of a sphere solution.

    Away from the strings ``Delta v = beta P f(v)`` so ``F12 = -beta P f(v) / 2``
    (the same as ``2 e^eta e^v (1 - e^v) / kappa^2`` with chordal distances).
    """
    mesh, params = sol.mesh, sol.params
    v = sol.v
    P = sol.product(0.0)
    e_eta = params.lam * P * np.exp(params.a * (v - np.exp(v)))
    F12 = magnetic_field(v, e_eta, params)
    flux_total = float(np.dot(mesh.areas, F12))
    lap_v = params.beta * P * np.exp(params.a * (v - np.exp(v))) * np.exp(v) * np.expm1(v)
    # int e^v |grad v|^2 = int grad e^v . grad v, taken as the finite-element
    # Dirichlet form; piecewise-linear gradients of the log singularity leave
    # an O(1) error per string that does not shrink with h
    ev = np.exp(v)
    dirichlet = -float(ev @ (mesh.stiffness @ v))
    energy = 0.25 * (float(np.dot(mesh.areas, np.expm1(v) * lap_v)) + dirichlet)
    holds, margin = completeness_check(params)
    return {
        "e_eta": e_eta, "F12": F12,
        "totals": {"flux": flux_total, "flux_expected": 2.0 * math.pi * params.N,
                   "energy": energy, "completeness_holds": holds,
                   "completeness_margin": margin},
    }
