import math

import numpy as np
import pytest

from gravstrings.errors import OrderingViolation, ParameterError, RegimeMismatch, SigmaTooLarge
from gravstrings.mesh import build_icosphere, snap_points
from gravstrings.model import fprime_max, make_params
from gravstrings.surface import (
    background_v0,
    c_delta,
    check_sphere_regime,
    cutoff_and_bump,
    default_points,
    default_sigma,
    delta_continuation,
    geodesic_distance,
    l2_area,
    monotone_iterate,
    singular_mask,
    singular_product,
    subsolution_gap,
    subsolution_w_minus,
    supersolution_phi1,
)


@pytest.fixture(scope="module")
def setup3(sphere_params):
    mesh = build_icosphere(3)
    pts = snap_points(mesh, default_points(4))
    v0 = background_v0(mesh, pts)
    sigma = default_sigma(mesh, pts)
    rho, f_sigma, C = cutoff_and_bump(mesh, pts, sigma)
    w, beta = subsolution_w_minus(mesh, pts, f_sigma, C, v0, sphere_params, rho)
    return mesh, pts, v0, sigma, rho, f_sigma, C, w, sphere_params.with_beta(beta)


@pytest.mark.parametrize("N, G", [(4, 1 / (4 * math.pi)), (2, 1 / (4 * math.pi))])
def test_regime_gate(N, G):
    with pytest.raises(RegimeMismatch):
        check_sphere_regime(make_params(N, G, 1.0, 1.0, "sphere"))


def test_plane_params_rejected():
    with pytest.raises(RegimeMismatch):
        check_sphere_regime(make_params(1, 1 / (8 * math.pi), 1.0, 1.0, "nontopological"))


def test_background_is_discrete_green_function(setup3):
    mesh, pts, v0 = setup3[:3]
    assert abs(np.dot(mesh.areas, v0)) < 1e-10
    rhs = -(4 * math.pi * 4 / mesh.total_area) * mesh.areas
    rhs[pts.indices] += 4 * math.pi
    assert np.max(np.abs(mesh.stiffness @ v0 - rhs)) < 1e-9


def test_background_matches_closed_form_away_from_points():
    errs = []
    for level in (3, 4):
        mesh = build_icosphere(level)
        pts = snap_points(mesh, default_points(4))
        far = np.min([geodesic_distance(mesh, i) for i in pts.indices], axis=0) > 0.3
        d = background_v0(mesh, pts) - background_v0(mesh, pts, form="closed")
        d = d - d[far].mean()
        errs.append(np.max(np.abs(d[far])))
    assert errs[1] < 0.05
    assert errs[1] < errs[0]


def test_cutoff_profile(setup3):
    mesh, pts, _, sigma, rho, f_sigma, C = setup3[:7]
    d = np.min([geodesic_distance(mesh, i) for i in pts.indices], axis=0)
    assert np.all(f_sigma[d <= sigma] == 1.0)
    assert np.all(f_sigma[d >= 2 * sigma] == 0.0)
    assert np.all((f_sigma >= 0) & (f_sigma <= 1))
    N, A = pts.N, mesh.total_area
    assert 8 * math.pi * N / A - C > 4 * math.pi * N / A


def test_sigma_too_large(setup3):
    mesh, pts = setup3[:2]
    with pytest.raises(SigmaTooLarge):
        cutoff_and_bump(mesh, pts, 0.6)
    with pytest.raises(ParameterError):
        cutoff_and_bump(mesh, pts, 0.0)


def test_product_monotone_in_delta(setup3):
    mesh, pts, _, _, rho = setup3[:5]
    P0 = singular_product(mesh, pts, 0.5, 0.0, rho)
    P1 = singular_product(mesh, pts, 0.5, 0.5, rho)
    P2 = singular_product(mesh, pts, 0.5, 1.0, rho)
    assert np.all(P0 >= P1) and np.all(P1 >= P2)
    with pytest.raises(ParameterError):
        singular_product(mesh, pts, 0.5, -1.0, rho)


def test_subsolution_inequality(setup3):
    mesh, pts, v0, _, rho, _, _, w, params = setup3
    assert np.max(w + v0) == pytest.approx(-0.1, abs=1e-12)
    for delta in (0.0, 0.25, 1.0):
        P = singular_product(mesh, pts, params.a, delta, rho)
        assert np.all(subsolution_gap(mesh, w, v0, P, params) > 0)


def test_supersolution_ordering(setup3):
    mesh, pts, v0, _, _, _, _, w = setup3[:8]
    mask = singular_mask(mesh, pts)
    phi1 = supersolution_phi1(v0, w, mask)
    assert np.all((phi1 - w)[~mask] > 0)
    with pytest.raises(OrderingViolation):
        supersolution_phi1(v0, -v0 + 1.0)


def test_c_delta_formula(setup3):
    params = setup3[-1]
    P = np.array([0.5, 2.0, 1.0])
    assert c_delta(P, params) == pytest.approx(1 + params.beta * 2.0 * fprime_max(0.5)[1])


def test_c_delta_regression_level5(sphere_params):
    mesh = build_icosphere(5)
    pts = snap_points(mesh, default_points(4))
    v0 = background_v0(mesh, pts)
    rho, f_sigma, C = cutoff_and_bump(mesh, pts, default_sigma(mesh, pts))
    _, beta = subsolution_w_minus(mesh, pts, f_sigma, C, v0, sphere_params, rho)
    assert beta == 512.0
    P = singular_product(mesh, pts, 0.5, 1.0, rho)
    assert c_delta(P, sphere_params.with_beta(beta)) == pytest.approx(994.5643720842653, rel=1e-10)


def test_monotone_iteration_stays_ordered(setup3):
    mesh, pts, v0, _, rho, _, _, w, params = setup3
    P = singular_product(mesh, pts, params.a, 1.0, rho)
    phi, hist = monotone_iterate(mesh, v0, w, params, P, delta=1.0, mask=singular_mask(mesh, pts))
    assert hist.sup_changes[-1] < 1e-10
    assert min(hist.min_gap_to_floor) >= -1e-10
    assert min(hist.min_gap_to_ceiling) >= -1e-10
    assert hist.max_order_breach <= 1e-9


def test_trivial_schedule_reproduces_single_solve(setup3):
    mesh, pts, v0, _, rho, _, _, w, params = setup3
    mask = singular_mask(mesh, pts)
    P = singular_product(mesh, pts, params.a, 0.5, rho)
    phi, _ = monotone_iterate(mesh, v0, w, params, P, delta=0.5, mask=mask)
    sol = delta_continuation(mesh, pts, v0, w, params, rho, [0.5])
    assert np.max(np.abs(sol.phi - phi)) == 0.0


def test_schedule_validation(setup3):
    mesh, pts, v0, _, rho, _, _, w, params = setup3
    with pytest.raises(ParameterError):
        delta_continuation(mesh, pts, v0, w, params, rho, [0.5, 1.0])
    with pytest.raises(ParameterError):
        delta_continuation(mesh, pts, v0, w, params, rho, [])


def test_sphere_solution_level3(sphere_solution_l3):
    sol = sphere_solution_l3
    d = sol.diagnostics
    assert d["final_residual_l2"] < 1e-3
    assert d["max_abs_phi"] <= d["uniform_bound"] + 1e-10
    tail = d["cauchy_tail"]
    assert all(b < a for a, b in zip(tail, tail[1:]))
    mask = sol.singular
    assert np.all(sol.v[~mask] < 0)
    for h in sol.histories:
        assert min(h.min_gap_to_floor) >= -1e-10 and min(h.min_gap_to_ceiling) >= -1e-10
    # each warm-started level is a nondecreasing chain
    for a_, b_ in zip(sol.delta_path, sol.delta_path[1:]):
        assert b_["delta"] < a_["delta"]


def test_residual_norm_helper(setup3):
    mesh = setup3[0]
    assert l2_area(mesh, np.ones(mesh.n_vertices)) == pytest.approx(math.sqrt(mesh.total_area))
