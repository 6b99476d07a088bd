import math

import numpy as np
import pytest

from gravstrings.errors import ParameterError, RegimeMismatch, SlopeBoundViolated, UnprovenAlpha
from gravstrings.model import alpha_threshold, make_params
from gravstrings.nontopological import (
    K_bound,
    energy_identity_residual,
    energy_identity_terms,
    energy_inequality_margin,
    eta_lower_bound,
    eta_of,
    find_bracket,
    integrate_from_apex,
    sandwich_gaps,
    shoot_t0,
    slope_bound,
    solve_nontopological,
    t0_for_K,
    tail_slope_k,
)


def test_K_inverse(nontopo_params):
    t0 = t0_for_K(2.0, 1.0, nontopo_params)
    assert K_bound(t0, 1.0, nontopo_params) == pytest.approx(2.0, rel=1e-13)


def test_envelopes_bound_eta(nontopo_params):
    for t0 in (0.0, 1.5, 2.5, 4.0):
        eta = eta_of(t0, 1.0, nontopo_params)
        assert eta_lower_bound(t0, 1.0, nontopo_params) < eta < K_bound(t0, 1.0, nontopo_params)


def test_bracket_changes_sign(nontopo_params):
    (lo, e_lo), (hi, e_hi) = find_bracket(1.0, nontopo_params)
    assert lo < hi and e_lo < 2.0 < e_hi


def test_benchmark_shooting(nontopo_solution):
    rec, sol = nontopo_solution
    assert abs(rec.eta - 2.0) < 1e-8
    assert rec.t0 == pytest.approx(2.16786, abs=1e-5)
    assert rec.k == pytest.approx(3.61538, abs=1e-5)
    assert rec.proven_regime
    assert sol.v.max() == pytest.approx(-1.0, abs=1e-12)
    assert sol.asymptotics["eta"] == pytest.approx(rec.eta, abs=1e-12)


def test_trajectory_shape(nontopo_solution):
    _, sol = nontopo_solution
    assert np.all(sol.v < 0)
    t0 = sol.asymptotics["t0"]
    assert np.all(sol.v_prime[sol.t < t0] > 0)
    assert np.all(sol.v_prime[sol.t > t0] < 0)


def test_sandwich(nontopo_solution, nontopo_params):
    _, sol = nontopo_solution
    upper, lower = sandwich_gaps(sol, nontopo_params)
    assert upper > -1e-9 and lower > -1e-9


def test_energy_identity(nontopo_solution, nontopo_params):
    rec, sol = nontopo_solution
    assert energy_identity_residual(sol, nontopo_params, rec.k) < 1e-6
    terms = energy_identity_terms(sol, nontopo_params)
    assert terms["first"] == pytest.approx((2 - 2 * nontopo_params.aN) * (rec.k + 2), rel=1e-6)


def test_last_energy_term_is_negative_at_half_coupling(nontopo_solution, nontopo_params):
    # the lower bound on k rests on this term being nonnegative; it is not for a = 1/2
    _, sol = nontopo_solution
    assert energy_identity_terms(sol, nontopo_params)["third"] < 0


def test_slope_check_reports_violation(nontopo_solution, nontopo_params):
    rec, sol = nontopo_solution
    assert slope_bound(nontopo_params) == pytest.approx(4.0)
    assert not sol.diagnostics["slope_bound_holds"]
    assert energy_inequality_margin(rec.k, nontopo_params) < 0
    with pytest.raises(SlopeBoundViolated):
        tail_slope_k(sol, nontopo_params)


def test_slope_bound_holds_for_weak_gravity():
    p = make_params(1, 0.001 / (4 * math.pi), 1.0, 1.0, "nontopological", beta=4.0)
    rec, sol = solve_nontopological(1.0, p)
    assert rec.k > slope_bound(p)
    assert energy_identity_residual(sol, p, rec.k) < 1e-6


def test_k_decreases_with_alpha(nontopo_params):
    ks = [solve_nontopological(al, nontopo_params)[0].k for al in (alpha_threshold(0.5), 2.0, 4.0)]
    assert ks[0] > ks[1] > ks[2] > 2.0


def test_unproven_alpha(nontopo_params):
    with pytest.raises(UnprovenAlpha):
        shoot_t0(0.3, nontopo_params)
    rec = shoot_t0(0.3, nontopo_params, allow_unproven_alpha=True)
    assert not rec.proven_regime
    assert abs(rec.eta - 2.0) < 1e-8


def test_regime_gate():
    p = make_params(1, 1 / (4 * math.pi), 1.0, 1.0, "topological")
    with pytest.raises(RegimeMismatch):
        shoot_t0(1.0, p)
    with pytest.raises(ParameterError):
        eta_of(0.0, -1.0, make_params(1, 1 / (8 * math.pi), 1.0, 1.0, "nontopological"))


def test_explicit_span(nontopo_solution, nontopo_params):
    rec, _ = nontopo_solution
    sol = integrate_from_apex(rec.t0, 1.0, nontopo_params, t_span=(-10.0, 20.0))
    assert sol.t[0] == pytest.approx(-10.0) and sol.t[-1] == pytest.approx(20.0)
    with pytest.raises(ParameterError):
        integrate_from_apex(rec.t0, 1.0, nontopo_params, t_span=(5.0, 20.0))


def test_record_serializes(nontopo_solution):
    rec, _ = nontopo_solution
    d = rec.to_dict()
    assert d["k"] == rec.k and d["n_iterations"] == len(rec.iterations)
