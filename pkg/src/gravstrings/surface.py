"""Multi-string solutions on the unit sphere by monotone iteration.

With ``v = phi + v0`` and ``Delta v0 = -4 pi N/|S| + 4 pi sum delta_{p_s}`` the
problem becomes

    Delta phi = beta P_delta(x) f(phi + v0) + 4 pi N / |S|,
    P_delta(x) = prod_s (|x - p_s|^2 + delta rho(x))^{-a},

which is solved between the subsolution ``w_minus`` and the supersolution
``phi_1 = -v0`` by the iteration

    (Delta - C_delta) phi_n = beta P_delta f(phi_{n-1} + v0) - C_delta phi_{n-1} + 4 pi N/|S|,

followed by continuation delta -> 0.  Discretely ``Delta = M^{-1} W`` and each
step solves the SPD M-matrix system ``(C M - W) phi_n = M (...)`` by conjugate
gradients.  ``|S|`` is the total lumped area of the mesh so that the discrete
solvability conditions hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import (
    ContinuationDiverged,
    LinearSolveFailure,
    MonotonicityBreach,
    OrderingViolation,
    ParameterError,
    RegimeMismatch,
    SigmaTooLarge,
    SubsolutionUnreachable,
)
from .mesh import SphereMesh, StringPoints
from .model import ModelParams, Regime, fprime_max, nonlinearity_f

ORDER_TOL = 1e-10
BREACH_TOL = 1e-9
BETA_CAP = 1e12


def check_sphere_regime(params: ModelParams, rtol: float = 1e-10) -> None:
    """Genus zero forces 4 pi G N = 2; the L^p control of the limit needs N >= 3."""
    if params.regime is not Regime.COMPACT_SPHERE:
        raise RegimeMismatch("surface solver requires the sphere regime")
    if abs(params.aN - 2.0) > 2.0 * rtol:
        raise RegimeMismatch(f"sphere requires 4 pi G N = 2, got {params.aN!r}")
    if params.N < 3:
        raise RegimeMismatch(f"sphere requires N >= 3, got N={params.N}")


# ---------------------------------------------------------------------------
# geometry helpers


def geodesic_distance(mesh: SphereMesh, idx: int) -> np.ndarray:
    c = np.clip(mesh.vertices @ mesh.vertices[idx], -1.0, 1.0)
    return np.arccos(c)


def chordal_sq(mesh: SphereMesh, idx: int) -> np.ndarray:
    """|x - p|^2 in the ambient space, with the vertex p itself set to (h_p / 2)^2."""
    d2 = np.maximum(2.0 - 2.0 * (mesh.vertices @ mesh.vertices[idx]), 0.0)
    d2[idx] = (0.5 * float(mesh.edge_length_at([idx])[0])) ** 2
    return d2


def singular_mask(mesh: SphereMesh, points: StringPoints) -> np.ndarray:
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[points.indices] = True
    return mask


def _solve_poisson(mesh: SphereMesh, weighted_rhs: np.ndarray) -> np.ndarray:
    """Zero-mean solution of W u = b for a b with zero sum."""
    b = weighted_rhs - weighted_rhs.sum() * mesh.areas / mesh.total_area
    # pin the last vertex to remove the constant kernel, then re-centre
    n = mesh.n_vertices
    A = -mesh.stiffness[: n - 1, : n - 1].tocsc()
    u = np.zeros(n)
    u[: n - 1] = spla.spsolve(A, -b[: n - 1])
    resid = mesh.stiffness @ u - b
    if not np.max(np.abs(resid)) < 1e-9 * max(1.0, np.max(np.abs(b))):
        raise LinearSolveFailure(f"Poisson residual {np.max(np.abs(resid)):.3e}")
    return u - np.dot(mesh.areas, u) / mesh.total_area


# ---------------------------------------------------------------------------
# background field


def green_closed_form(mesh: SphereMesh, points: StringPoints) -> np.ndarray:
    """sum_s m_s ln|x - p_s|^2 = sum_s m_s 2 ln(2 sin(d_s / 2)).

    On the unit sphere ``Delta ln|x - p|^2 = -1 + 4 pi delta_p``.  Singular
    vertices get the value at chordal distance h/2.
    """
    out = np.zeros(mesh.n_vertices)
    for idx, m in zip(points.indices, points.multiplicity):
        out += m * np.log(chordal_sq(mesh, idx))
    return out


def background_v0(mesh: SphereMesh, points: StringPoints, *, form: str = "discrete",
                  mean: float = 0.0) -> np.ndarray:
    """Background field v0 with area-weighted mean ``mean``.

    ``form="discrete"`` solves ``W v0 = -(4 pi N / |S|) M 1 + 4 pi sum_s m_s e_{p_s}``,
    the discrete Green function.  It makes ``-v0`` an exact discrete
    supersolution.  ``form="closed"`` evaluates the continuum Green function and
    differs from the discrete one by O(h^2) away from the points.
    """
    if form == "closed":
        v0 = green_closed_form(mesh, points)
        v0 -= np.dot(mesh.areas, v0) / mesh.total_area
    elif form == "discrete":
        b = -(4.0 * math.pi * points.N / mesh.total_area) * mesh.areas
        b[points.indices] += 4.0 * math.pi * points.multiplicity
        v0 = _solve_poisson(mesh, b)
    else:
        raise ParameterError(f"unknown background form {form!r}")
    return v0 + mean


# ---------------------------------------------------------------------------
# cutoff and subsolution


def _quintic_step(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def min_point_separation(mesh: SphereMesh, points: StringPoints) -> float:
    p = mesh.vertices[points.indices]
    if len(p) < 2:
        return math.pi
    c = np.clip(p @ p.T, -1.0, 1.0)
    np.fill_diagonal(c, -1.0)
    return float(np.arccos(c.max()))


def cutoff_and_bump(mesh: SphereMesh, points: StringPoints, sigma: float):
    """Return ``(rho, f_sigma, C_sigma)``.

    Both profiles equal 1 within geodesic distance sigma of a string point, 0
    beyond 2 sigma, with a C^2 quintic transition.  ``C_sigma`` is
    ``(8 pi N / |S|^2) int f_sigma``.
    """
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    if min_point_separation(mesh, points) <= 4.0 * sigma:
        raise SigmaTooLarge(f"caps of radius 2 sigma = {2 * sigma} overlap")
    bump = np.zeros(mesh.n_vertices)
    for idx in points.indices:
        d = geodesic_distance(mesh, idx)
        bump = np.maximum(bump, 1.0 - _quintic_step((d - sigma) / sigma))
    A, N = mesh.total_area, points.N
    C = 8.0 * math.pi * N / A**2 * float(np.dot(mesh.areas, bump))
    if not 8.0 * math.pi * N / A - C > 4.0 * math.pi * N / A:
        raise SigmaTooLarge(f"C(sigma)={C} violates 8 pi N/|S| - C > 4 pi N/|S|")
    return bump.copy(), bump, C


def default_sigma(mesh: SphereMesh, points: StringPoints) -> float:
    """Half of the largest sigma that keeps caps disjoint and satisfies the C(sigma) bound."""
    hi = min_point_separation(mesh, points) / 4.0 * (1.0 - 1e-9)
    try:
        cutoff_and_bump(mesh, points, hi)
        return 0.5 * hi
    except SigmaTooLarge:
        pass
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        try:
            cutoff_and_bump(mesh, points, mid)
            lo = mid
        except SigmaTooLarge:
            hi = mid
    if lo == 0.0:
        raise SigmaTooLarge("no admissible sigma")
    return 0.5 * lo


def singular_product(mesh: SphereMesh, points: StringPoints, a: float, delta: float,
                     rho: np.ndarray) -> np.ndarray:
    """prod_s (|x - p_s|^2 + delta rho)^{-a m_s} with chordal distances."""
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    logP = np.zeros(mesh.n_vertices)
    for idx, m in zip(points.indices, points.multiplicity):
        logP -= a * m * np.log(chordal_sq(mesh, idx) + delta * rho)
    return np.exp(logP)


def nonlinear_term(phi, v0, P, params: ModelParams) -> np.ndarray:
    return params.beta * P * nonlinearity_f(phi + v0, params.a)


def subsolution_gap(mesh, w, v0, P, params) -> np.ndarray:
    """Delta w - beta P f(w + v0) - 4 pi N/|S|; positive where w is a strict subsolution."""
    N, A = params.N, mesh.total_area
    return mesh.apply_laplacian(w) - nonlinear_term(w, v0, P, params) - 4.0 * math.pi * N / A


def subsolution_w_minus(mesh: SphereMesh, points: StringPoints, f_sigma: np.ndarray,
                        C_sigma: float, v0: np.ndarray, params: ModelParams, rho: np.ndarray,
                        *, margin: float = 0.1, deltas=(0.0, 1.0)):
    """Solve Delta w = (8 pi N/|S|) f_sigma - C(sigma), shift so max(w + v0) = -margin,
    then double beta from its configured value until the subsolution inequality
    holds at every vertex for each delta in ``deltas``.

    Returns ``(w_minus, beta_min)``.
    """
    A, N = mesh.total_area, params.N
    rhs = (8.0 * math.pi * N / A) * f_sigma - C_sigma
    mean_rhs = float(np.dot(mesh.areas, rhs)) / A
    if abs(mean_rhs) > 1e-12 * (8.0 * math.pi * N / A):
        raise SigmaTooLarge(f"subsolution source has mean {mean_rhs}")
    w = _solve_poisson(mesh, mesh.areas * (rhs - mean_rhs))
    w += -margin - float(np.max(w + v0))
    products = [singular_product(mesh, points, params.a, d, rho) for d in deltas]
    beta = params.beta
    while True:
        p = params.with_beta(beta)
        if all(np.all(subsolution_gap(mesh, w, v0, P, p) > 0) for P in products):
            return w, beta
        beta *= 2.0
        if beta > BETA_CAP:
            raise SubsolutionUnreachable(f"beta exceeded {BETA_CAP:g} in the doubling search")


def supersolution_phi1(v0: np.ndarray, w_minus: np.ndarray | None = None,
                       mask: np.ndarray | None = None) -> np.ndarray:
    """phi_1 = -v0, checked to lie strictly above ``w_minus`` off the singular vertices."""
    phi1 = -np.asarray(v0, dtype=float)
    if w_minus is not None:
        keep = np.ones(phi1.size, dtype=bool) if mask is None else ~mask
        gap = float(np.min((phi1 - w_minus)[keep]))
        if not gap > 0:
            raise OrderingViolation(f"phi_1 - w_minus has minimum {gap}")
    return phi1


def c_delta(P_delta: np.ndarray, params: ModelParams) -> float:
    """1 + beta max_x P_delta(x) max_t f'(t)."""
    return 1.0 + params.beta * float(np.max(P_delta)) * fprime_max(params.a)[1]


# ---------------------------------------------------------------------------
# monotone iteration


@dataclass
class IterationHistory:
    delta: float
    C: float
    direction: int
    sup_changes: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    min_gap_to_floor: list = field(default_factory=list)
    min_gap_to_ceiling: list = field(default_factory=list)
    max_order_breach: float = 0.0
    restarts: int = 0

    @property
    def iterations(self) -> int:
        return len(self.sup_changes)


def _cg(A, b, x0, rtol, precond):
    info_iters = [0]

    def count(_):
        info_iters[0] += 1

    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=10 * A.shape[0],
                      M=precond, callback=count)
    if info != 0:
        raise LinearSolveFailure(f"conjugate gradients did not converge (info={info})")
    return x, info_iters[0]


def monotone_iterate(mesh: SphereMesh, v0: np.ndarray, w_minus: np.ndarray,
                     params: ModelParams, P_delta: np.ndarray, *, delta: float = float("nan"),
                     tol: float = 1e-10, start: np.ndarray | None = None, direction: int = -1,
                     mask: np.ndarray | None = None, max_iter: int = 20000,
                     cg_rtol: float = 1e-13, C: float | None = None, max_restarts: int = 3):
    """Iterate the scheme from ``start`` (default ``-v0``) until the sup change is below ``tol``.

    ``direction=-1`` expects a nonincreasing chain (start at a supersolution),
    ``+1`` a nondecreasing one (start at a subsolution).  A step against the
    expected direction by more than 1e-9 doubles C and restarts, at most
    ``max_restarts`` times.
    """
    phi1 = -v0
    start = phi1 if start is None else np.asarray(start, dtype=float)
    keep = np.ones(mesh.n_vertices, dtype=bool) if mask is None else ~mask
    A_area, N = mesh.total_area, params.N
    source = 4.0 * math.pi * N / A_area
    C = c_delta(P_delta, params) if C is None else C

    for restart in range(max_restarts + 1):
        hist = IterationHistory(delta=delta, C=C, direction=direction, restarts=restart)
        op = (C * sparse.diags(mesh.areas) - mesh.stiffness).tocsr()
        precond = sparse.diags(1.0 / op.diagonal())
        phi = start.copy()
        breached = False
        for _ in range(max_iter):
            g = C * phi - nonlinear_term(phi, v0, P_delta, params) - source
            new, n_cg = _cg(op, mesh.areas * g, phi, cg_rtol, precond)
            step = new - phi
            against = float(np.max((-direction * step)[keep]))
            hist.max_order_breach = max(hist.max_order_breach, against)
            if against > BREACH_TOL:
                breached = True
                break
            floor_gap = float(np.min((new - w_minus)[keep]))
            ceil_gap = float(np.min((phi1 - new)[keep]))
            if floor_gap < -ORDER_TOL or ceil_gap < -ORDER_TOL:
                raise OrderingViolation(
                    f"iterate left [w_minus, phi_1]: gaps {floor_gap:.3e}, {ceil_gap:.3e}"
                )
            hist.sup_changes.append(float(np.max(np.abs(step))))
            hist.cg_iterations.append(n_cg)
            hist.min_gap_to_floor.append(floor_gap)
            hist.min_gap_to_ceiling.append(ceil_gap)
            phi = new
            if hist.sup_changes[-1] < tol:
                return phi, hist
        else:
            raise LinearSolveFailure(f"no convergence in {max_iter} iterations")
        if breached:
            C *= 2.0
    raise MonotonicityBreach(
        f"iterates moved against the expected order by {hist.max_order_breach:.3e} "
        f"after {max_restarts} doublings of C"
    )


def residual(mesh, phi, v0, params, P, mask=None) -> np.ndarray:
    """Pointwise residual of Delta phi = beta P f(phi + v0) + 4 pi N/|S|, zero on masked vertices."""
    r = -subsolution_gap(mesh, phi, v0, P, params)
    if mask is not None:
        r = np.where(mask, 0.0, r)
    return r


def l2_area(mesh, u) -> float:
    return math.sqrt(float(np.dot(mesh.areas, np.asarray(u) ** 2)))


# ---------------------------------------------------------------------------
# continuation


@dataclass(frozen=True)
class SurfaceSolution:
    mesh: SphereMesh
    points: StringPoints
    params: ModelParams
    v0: np.ndarray
    w_minus: np.ndarray
    phi: np.ndarray
    delta_path: list
    beta_used: float
    sigma: float
    rho: np.ndarray
    histories: list = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        return self.phi + self.v0

    @property
    def singular(self) -> np.ndarray:
        return singular_mask(self.mesh, self.points)

    def product(self, delta: float = 0.0) -> np.ndarray:
        return singular_product(self.mesh, self.points, self.params.a, delta, self.rho)


def default_schedule(k_max: int = 12, finish_at_zero: bool = True):
    sched = [2.0 ** (-k) for k in range(k_max + 1)]
    return sched + [0.0] if finish_at_zero else sched


def delta_continuation(mesh: SphereMesh, points: StringPoints, v0: np.ndarray,
                       w_minus: np.ndarray, params: ModelParams, rho: np.ndarray,
                       schedule=None, *, tol: float = 1e-10, sigma: float = float("nan"),
                       residual_tol: float = 1e-3):
    """Solve at each delta of a decreasing schedule, warm-starting from the previous level.

    The first level starts from phi_1 and decreases; later levels start at the
    previous solution, which is a subsolution for the smaller delta, so their
    chains increase.  Both stay inside [w_minus, phi_1].
    """
    check_sphere_regime(params)
    schedule = default_schedule() if schedule is None else list(schedule)
    if not schedule or any(d < 0 for d in schedule) or any(
        b >= a for a, b in zip(schedule, schedule[1:])
    ):
        raise ParameterError("schedule must be a strictly decreasing sequence of deltas >= 0")
    mask = singular_mask(mesh, points)
    phi1 = -v0
    path, histories, changes = [], [], []
    phi = None
    for k, delta in enumerate(schedule):
        P = singular_product(mesh, points, params.a, delta, rho)
        start, direction = (None, -1) if phi is None else (phi, +1)
        new, hist = monotone_iterate(mesh, v0, w_minus, params, P, delta=delta, tol=tol,
                                     start=start, direction=direction, mask=mask)
        change = math.nan if phi is None else float(np.max(np.abs(new - phi)))
        res = residual(mesh, new, v0, params, P, mask)
        path.append({"delta": delta, "iterations": hist.iterations, "C": hist.C,
                     "sup_change": change, "residual_l2": l2_area(mesh, res),
                     "residual_sup": float(np.max(np.abs(res)))})
        histories.append(hist)
        if phi is not None:
            changes.append(change)
        phi = new

    bound = max(float(np.max(np.abs(phi1[~mask]))), float(np.max(np.abs(w_minus))))
    positive = [d for d in schedule if d > 0]
    tail = changes[: len(positive) - 1][-4:]
    if len(tail) >= 2 and any(b >= a for a, b in zip(tail, tail[1:])):
        raise ContinuationDiverged(f"Cauchy differences {tail} do not decrease")
    final_res = residual(mesh, phi, v0, params,
                         singular_product(mesh, points, params.a, 0.0, rho), mask)
    return SurfaceSolution(
        mesh=mesh, points=points, params=params, v0=v0, w_minus=w_minus, phi=phi,
        delta_path=path, beta_used=params.beta, sigma=sigma, rho=rho, histories=histories,
        diagnostics={
            "uniform_bound": bound,
            "max_abs_phi": float(np.max(np.abs(phi))),
            "cauchy_tail": tail,
            "final_residual_l2": l2_area(mesh, final_res),
            "final_residual_sup": float(np.max(np.abs(final_res))),
            "residual_tol": residual_tol,
        },
    )


def solve_sphere(params: ModelParams, level: int = 5, points=None, multiplicity=None, *,
                 sigma: float | None = None, schedule=None, tol: float = 1e-10,
                 margin: float = 0.1, mesh: SphereMesh | None = None) -> SurfaceSolution:
    """Full pipeline: mesh, background, cutoff, subsolution, beta search, continuation."""
    from .mesh import build_icosphere, snap_points

    check_sphere_regime(params)
    mesh = build_icosphere(level) if mesh is None else mesh
    if points is None:
        points = default_points(params.N)
    pts = snap_points(mesh, points, multiplicity)
    if pts.N != params.N:
        raise ParameterError(f"points carry total multiplicity {pts.N}, expected N={params.N}")
    v0 = background_v0(mesh, pts)
    sigma = default_sigma(mesh, pts) if sigma is None else sigma
    rho, f_sigma, C_sigma = cutoff_and_bump(mesh, pts, sigma)
    w_minus, beta = subsolution_w_minus(mesh, pts, f_sigma, C_sigma, v0, params, rho,
                                        margin=margin)
    mask = singular_mask(mesh, pts)
    supersolution_phi1(v0, w_minus, mask)
    beta_initial = params.beta
    params = params.with_beta(beta)
    sol = delta_continuation(mesh, pts, v0, w_minus, params, rho, schedule, tol=tol,
                             sigma=sigma)
    sol.diagnostics.update({"C_sigma": C_sigma, "sigma": sigma, "beta_initial": beta_initial})
    return sol


def default_points(N: int) -> np.ndarray:
    """N well separated unit vectors: tetrahedron for N = 4, a Fibonacci lattice otherwise."""
    if N == 4:
        p = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    else:
        i = np.arange(N) + 0.5
        z = 1.0 - 2.0 * i / N
        phi = math.pi * (1.0 + math.sqrt(5.0)) * i
        rr = np.sqrt(1.0 - z * z)
        p = np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)
    return p / np.linalg.norm(p, axis=1, keepdims=True)
