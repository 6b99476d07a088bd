"""Radial trajectories in the logarithmic variable t = ln r."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import OutOfDomain
from .model import ModelParams

TOPOLOGICAL = "topological"
NONTOPOLOGICAL = "nontopological"


@dataclass(frozen=True)
class RadialSolution:
    """A radial profile sampled on a strictly increasing t-grid.

    ``v_second`` is taken from the right-hand side of the ODE, never from
    differencing ``v``.  ``dense`` evaluates ``(v, v', v'')`` at arbitrary t
    inside the grid and is what :meth:`resample` uses.
    """

    kind: str
    t: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    v_second: np.ndarray
    params: ModelParams
    asymptotics: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    dense: Callable | None = field(default=None, repr=False, compare=False)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.t)

    def resample(self, n: int) -> "RadialSolution":
        """Same trajectory on a uniform grid of ``n`` points over the same t-range."""
        if self.dense is None:
            raise ValueError("solution carries no dense output")
        t = np.linspace(self.t[0], self.t[-1], n)
        v, vp, vpp = self.dense(t)
        return replace(self, t=t, v=v, v_prime=vp, v_second=vpp)


def to_radial_profile(sol: RadialSolution, r_points) -> np.ndarray:
    """Map to the original radius: rows of ``(r, v, v_r)`` with ``v_r = v'(t) / r``.

    Values between t-nodes come from monotonicity-preserving cubic
    interpolation.
    """
    r = np.asarray(r_points, dtype=float)
    if r.ndim != 1 or np.any(r <= 0):
        raise OutOfDomain("r_points must be a 1-d array of positive radii")
    if np.any(np.diff(r) < 0):
        raise OutOfDomain("r_points must be sorted")
    t = np.log(r)
    span = 1e-12 * max(1.0, abs(sol.t[0]), abs(sol.t[-1]))
    if t[0] < sol.t[0] - span or t[-1] > sol.t[-1] + span:
        raise OutOfDomain(
            f"r outside [{np.exp(sol.t[0])!r}, {np.exp(sol.t[-1])!r}]"
        )
    t = np.clip(t, sol.t[0], sol.t[-1])
    v = PchipInterpolator(sol.t, sol.v)(t)
    vp = PchipInterpolator(sol.t, sol.v_prime)(t)
    return np.column_stack([r, v, vp / r])
