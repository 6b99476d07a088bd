"""Model parameters, the nonlinearity and the potential / first-integral functions.

Everything here is shared by the planar and spherical solvers.  The
nonlinearity is

    f(v) = exp(a (v - e^v)) e^v (e^v - 1),

and the radial potential is ``H(v) = -beta * int_{-inf}^v f(w) dw``.  All
integrals over ``(-inf, v]`` are computed after the substitution ``s = e^w``,
which turns them into proper integrals of ``s^a e^{-a s} (1 - s)`` on
``(0, e^v]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    CompletenessViolation,
    OutOfDomain,
    ParameterError,
    QuadratureFailure,
    RegimeMismatch,
    TopologicalBetaMismatch,
)

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 200

# exp(a (v - e^v)) is exactly 0.0 in double precision beyond this point
_V_CLIP = 300.0


class Regime(str, enum.Enum):
    TOPOLOGICAL_PLANE = "topological"
    NONTOPOLOGICAL_PLANE = "nontopological"
    COMPACT_SPHERE = "sphere"


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of one run.

    ``beta`` is derived from ``kappa`` and ``lam`` (``beta = 4 lam / kappa^2``)
    and ``a`` from ``G`` (``a = 4 pi G``).  Use :func:`make_params` to build a
    validated instance.
    """

    N: int
    G: float
    kappa: float
    lam: float
    regime: Regime

    @property
    def a(self) -> float:
        return 4.0 * math.pi * self.G

    @property
    def beta(self) -> float:
        return 4.0 * self.lam / self.kappa**2

    @property
    def aN(self) -> float:
        return self.a * self.N

    def with_beta(self, beta: float) -> "ModelParams":
        """Copy with ``beta`` overridden; ``lam`` is back-solved as beta kappa^2 / 4."""
        if not (beta > 0 and math.isfinite(beta)):
            raise ParameterError(f"beta must be positive and finite, got {beta!r}")
        return replace(self, lam=beta * self.kappa**2 / 4.0)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "G": self.G,
            "a": self.a,
            "kappa": self.kappa,
            "lambda": self.lam,
            "beta": self.beta,
            "regime": self.regime.value,
        }


def make_params(
    N: int,
    G: float,
    kappa: float,
    lam: float,
    regime: Regime | str,
    *,
    beta: float | None = None,
    rtol: float = 1e-12,
) -> ModelParams:
    """Validate inputs and build :class:`ModelParams`.

    The regime gates are: topological plane ``aN = 1``, non-topological plane
    ``aN < 1``, compact sphere ``aN = 2`` with ``N >= 3``.  ``beta`` overrides
    ``4 lam / kappa^2`` by back-solving ``lam``.
    """
    regime = Regime(regime)
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    for name, value in (("G", G), ("kappa", kappa), ("lambda", lam)):
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite, got {value!r}")
    if G <= 0:
        raise ParameterError(f"G must be positive, got {G!r}")
    if kappa == 0:
        raise ParameterError("kappa must be nonzero")
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam!r}")

    params = ModelParams(N=N, G=float(G), kappa=float(kappa), lam=float(lam), regime=regime)
    if beta is not None:
        params = params.with_beta(beta)

    aN = params.aN
    if regime is Regime.TOPOLOGICAL_PLANE:
        if abs(aN - 1.0) > rtol:
            raise RegimeMismatch(f"topological plane requires 4 pi G N = 1, got {aN!r}")
    elif regime is Regime.NONTOPOLOGICAL_PLANE:
        if not aN < 1.0:
            raise RegimeMismatch(f"non-topological plane requires 4 pi G N < 1, got {aN!r}")
    else:
        if abs(aN - 2.0) > 2.0 * rtol:
            raise RegimeMismatch(f"compact sphere requires 4 pi G N = 2, got {aN!r}")
        if N < 3:
            raise RegimeMismatch(f"compact sphere requires N >= 3, got N={N}")

    # the completeness bound is a statement about the planar metric only
    if regime is not Regime.COMPACT_SPHERE and N > (1.0 / params.a) * (1.0 + rtol):
        raise CompletenessViolation(f"N={N} exceeds 1/(4 pi G)={1.0 / params.a!r}")
    return params


# ---------------------------------------------------------------------------
# nonlinearity


def nonlinearity_f(v, a: float):
    """f(v) = exp(a (v - e^v)) e^v (e^v - 1), vectorised and underflow safe."""
    v = np.minimum(np.asarray(v, dtype=float), _V_CLIP)
    out = np.exp(a * (v - np.exp(v)) + v) * np.expm1(v)
    return out[()] if out.ndim == 0 else out


def nonlinearity_fprime(v, a: float):
    """Signed derivative exp(a (v - e^v)) e^v (2 e^v - 1 - a (1 - e^v)^2)."""
    v = np.minimum(np.asarray(v, dtype=float), _V_CLIP)
    ev = np.exp(v)
    out = np.exp(a * (v - ev) + v) * (2.0 * ev - 1.0 - a * np.expm1(v) ** 2)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=64)
def fprime_max(a: float) -> tuple[float, float]:
    """Return ``(argmax, max)`` of ``f'(., a)`` over the real line.

    f' vanishes at both ends, so a coarse scan followed by a bounded Brent
    refinement around the best node is enough.
    """
    grid = np.linspace(-40.0, 10.0, 5001)
    vals = nonlinearity_fprime(grid, a)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda v: -nonlinearity_fprime(v, a), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(-res.fun)


def alpha_threshold(a: float) -> float:
    """ln(a / (1 + a - sqrt(1 + a))).

    For v below minus this value ``f`` is decreasing, which is what the
    shooting lower bound needs.
    """
    if not a > 0:
        raise ParameterError(f"a must be positive, got {a!r}")
    # with s = sqrt(1 + a): 1 + a - s = s a / (1 + s), so the ratio is 1 + 1/s
    s = math.sqrt(1.0 + a)
    return math.log1p(1.0 / s)


# ---------------------------------------------------------------------------
# potential and first integral


def _integrand_s(s: float, a: float) -> float:
    # f(w) dw with s = e^w, sign flipped: s^a e^{-a s} (1 - s)
    return s**a * math.exp(-a * s) * (1.0 - s)


def _quad_checked(lo: float, hi: float, a: float, epsabs: float = QUAD_EPSABS) -> float:
    if hi <= lo:
        return 0.0
    out = integrate.quad(
        _integrand_s, lo, hi, args=(a,), epsabs=epsabs, epsrel=QUAD_EPSREL,
        limit=QUAD_LIMIT, full_output=1,
    )
    if len(out) > 3:
        # a fourth element is only returned when QUADPACK flags a problem
        raise QuadratureFailure(f"quadrature on [{lo!r}, {hi!r}] failed: {out[3]}")
    return out[0]


@lru_cache(maxsize=64)
def potential_denominator(a: float) -> float:
    """int_{-inf}^0 e^{a (v - e^v)} e^v (1 - e^v) dv = int_0^1 s^a e^{-a s}(1 - s) ds."""
    return _quad_checked(0.0, 1.0, a)


def beta_topological(N: int, a: float) -> float:
    """The coupling beta pinned by requiring the first integral to vanish at v = 0."""
    if not a > 0:
        raise ParameterError(f"a must be positive, got {a!r}")
    return 2.0 * N * N / potential_denominator(a)


def potential_H(v, params: ModelParams):
    """H(v) = -beta int_{-inf}^v f(w, a) dw for v <= 0."""
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr > 0):
        raise OutOfDomain("potential_H is defined here for v <= 0")
    a, beta = params.a, params.beta
    # relative accuracy only: H is as small as e^{(1+a) v}
    out = np.array([beta * _quad_checked(0.0, math.exp(x), a, epsabs=0.0)
                    for x in v_arr.ravel()])
    out = out.reshape(v_arr.shape)
    return out[()] if out.ndim == 0 else out


def _check_topological(params: ModelParams, rtol: float = 1e-10) -> None:
    if params.regime is not Regime.TOPOLOGICAL_PLANE:
        raise RegimeMismatch("the first integral is defined for the topological regime")
    b = beta_topological(params.N, params.a)
    if abs(params.beta - b) > rtol * b:
        raise TopologicalBetaMismatch(
            f"beta={params.beta!r} but the topological value is {b!r}"
        )


def first_integral_F(v, params: ModelParams):
    """F(v) = 4 N^2 - 2 H(v), so that (v')^2 = F(v) along the topological solution.

    Evaluated as ``2 beta int_{e^v}^1 s^a e^{-as}(1 - s) ds`` plus the (round-off
    sized) defect ``4 N^2 - 2 H(0)``, which avoids cancellation as v -> 0.
    """
    _check_topological(params)
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr > 0):
        raise OutOfDomain("first_integral_F is defined for v <= 0")
    a, beta, N = params.a, params.beta, params.N
    defect = 4.0 * N * N - 2.0 * beta * potential_denominator(a)
    out = np.array(
        [2.0 * beta * _quad_checked(math.exp(x), 1.0, a) + defect for x in v_arr.ravel()]
    ).reshape(v_arr.shape)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# tabulated potential for ODE right-hand sides

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _integral_f_to_zero(v: float, a: float) -> float:
    """int_v^0 f(w) dw by 16-point Gauss-Legendre; exact to round-off for |v| <~ 0.1."""
    half = -0.5 * v
    w = half * (_GL_X + 1.0) + v
    return half * float(np.dot(_GL_W, nonlinearity_f(w, a)))


@dataclass(frozen=True)
class PotentialTable:
    """Cubic Hermite table of the potential on nodes uniform in v (log-spaced in s = e^v).

    Node values are cumulative panel quadratures and node slopes are the exact
    derivative ``-beta f``.  For ``v > near_zero`` the first integral is instead
    evaluated directly as ``-2 beta int_v^0 f``, where the interpolation error
    would otherwise be comparable to F itself.
    """

    params: ModelParams
    grid: np.ndarray
    H_values: np.ndarray
    near_zero: float = -0.05
    _complement: CubicHermiteSpline = field(repr=False, compare=False, default=None)
    _defect: float = 0.0

    @classmethod
    def build(cls, params: ModelParams, n_nodes: int = 16384, v_min: float = -40.0,
              near_zero: float = -0.05) -> "PotentialTable":
        a, beta = params.a, params.beta
        grid = np.linspace(v_min, 0.0, n_nodes)
        s = np.exp(grid)
        panels = np.array([_quad_checked(s[i], s[i + 1], a) for i in range(n_nodes - 1)])
        # complement[i] = beta int_{s_i}^1 ..., so H = beta D - complement
        complement = beta * np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
        total = beta * potential_denominator(a)
        H_values = total - complement
        spline = CubicHermiteSpline(grid, complement, beta * nonlinearity_f(grid, a))
        defect = 4.0 * params.N**2 - 2.0 * total
        return cls(params=params, grid=grid, H_values=H_values, near_zero=near_zero,
                   _complement=spline, _defect=defect)

    def H(self, v):
        v = np.asarray(v, dtype=float)
        a, beta = self.params.a, self.params.beta
        total = beta * potential_denominator(a)
        out = np.where(
            v < self.grid[0],
            beta * np.exp((a + 1.0) * np.minimum(v, 0.0)) / (a + 1.0),
            total - self._complement(np.clip(v, self.grid[0], 0.0)),
        )
        return out[()] if out.ndim == 0 else out

    def F(self, v: float) -> float:
        """4 N^2 - 2 H(v) for a scalar v <= 0 (clamped at zero)."""
        a, beta = self.params.a, self.params.beta
        if v >= 0.0:
            return 0.0
        if v > self.near_zero:
            val = -2.0 * beta * _integral_f_to_zero(v, a) + self._defect
        elif v < self.grid[0]:
            val = 4.0 * self.params.N**2 - 2.0 * beta * math.exp((a + 1.0) * v) / (a + 1.0)
        else:
            val = 2.0 * float(self._complement(v)) + self._defect
        return max(val, 0.0)
