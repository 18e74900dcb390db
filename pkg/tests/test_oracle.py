import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ocpnet.exceptions import ConfigurationError, UnsupportedProblem
from ocpnet.oracle import (cost_of, lqr_closed_form, pmp_residuals, reference_surface, shoot_many, shoot_tpbvp,
                           solve)
from ocpnet.problems import make_problem

T1 = np.linspace(0.0, 1.0, 101)


def test_zero_initial_condition():
    sol = lqr_closed_form(make_problem(1), 0.0, T1)
    assert np.all(sol.x_star == 0) and np.all(sol.u_star == 0) and sol.J_star == 0


def test_closed_form_endpoints():
    sol = lqr_closed_form(make_problem(1), 1.0, T1)
    assert sol.u_star[0] == pytest.approx(-0.761594155955765, abs=1e-12)
    assert sol.J_star == pytest.approx(np.tanh(1.0), abs=1e-15)
    assert sol.u_star[-1] == 0.0
    assert sol.x_star[-1] == pytest.approx(0.648054273663885, abs=1e-12)


def test_closed_form_only_for_ocp1():
    with pytest.raises(ConfigurationError):
        lqr_closed_form(make_problem(2), 1.0, np.linspace(0, 2, 11))


@pytest.mark.parametrize("x0", [0.0, 0.5, 1.0])
def test_shooting_matches_closed_form(x0):
    p = make_problem(1)
    a, b = shoot_tpbvp(p, x0, T1), lqr_closed_form(p, x0, T1)
    for s, c in ((a.x_star, b.x_star), (a.u_star, b.u_star), (a.lambda_star, b.lambda_star)):
        assert np.max(np.abs(s - c)) <= 1e-8
    assert abs(a.J_star - x0**2 * np.tanh(1.0)) <= 1e-8


def test_ocp2_initial_control_is_half_state():
    p = make_problem(2)
    sol = shoot_tpbvp(p, 1.0, np.linspace(0, 2, 101))
    assert sol.u_star[0] == 0.5
    assert abs(sol.lambda_star[-1] + 1.0) <= 1e-8
    assert sol.lambda_star[0] != 0


@pytest.mark.parametrize("pid,x0", [(2, 0.35), (2, 1.0), (3, 15.0), (3, 0.0), (3, 40.0)])
def test_shooting_is_pmp_consistent(pid, x0):
    p = make_problem(pid)
    sol = shoot_tpbvp(p, x0, np.linspace(0, p.horizon_T, 2001))
    res = pmp_residuals(p, sol)
    assert max(np.max(np.abs(v)) for v in res.values()) <= 1e-6
    assert sol.x_star[0] == x0


def test_cost_examples():
    p3 = make_problem(3)
    t = np.linspace(0, 8, 51)
    assert cost_of(p3, np.full_like(t, 15.0), np.full_like(t, 30.0), t) == 0.0
    assert cost_of(make_problem(1), np.ones_like(T1), np.zeros_like(T1), T1) == pytest.approx(1.0, abs=1e-14)


def test_cost_of_oracle_trajectory():
    p = make_problem(1)
    sol = lqr_closed_form(p, 1.0, T1)
    assert abs(cost_of(p, sol.x_star, sol.u_star, T1) - np.tanh(1.0)) <= 1e-4


def test_cost_of_is_second_order():
    p = make_problem(1)
    errs = []
    for n in (50, 100, 200):
        t = np.linspace(0, 1, n + 1)
        sol = lqr_closed_form(p, 1.0, t)
        errs.append(abs(cost_of(p, sol.x_star, sol.u_star, t) - np.tanh(1.0)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.8 < coarse / fine < 4.2


def test_cost_of_shape_mismatch():
    with pytest.raises(ValueError):
        cost_of(make_problem(1), np.zeros(3), np.zeros(4), np.linspace(0, 1, 3))


@settings(max_examples=50, deadline=None)
@given(x0=st.floats(-10, 10), alpha=st.floats(-10, 10))
def test_closed_form_cost_scales_quadratically(x0, alpha):
    p = make_problem(1)
    J1 = lqr_closed_form(p, x0, T1).J_star
    J2 = lqr_closed_form(p, alpha * x0, T1).J_star
    assert J2 == pytest.approx(alpha**2 * J1, rel=1e-12, abs=1e-300)


def test_vectorised_shooting_matches_single():
    p = make_problem(3)
    t = np.linspace(0, 8, 101)
    many = shoot_many(p, [0.0, 20.0], t)
    one = shoot_tpbvp(p, 20.0, t)
    assert np.max(np.abs(many[1].x_star - one.x_star)) <= 1e-9
    assert many[1].J_star == pytest.approx(one.J_star, rel=1e-10)


def test_reference_surface_shapes_and_solve_dispatch():
    p = make_problem(2)
    t = np.linspace(0, 2, 11)
    surf = reference_surface(p, t, [0.2, 0.4, 0.2])
    assert surf["u_star"].shape == (11, 3) and surf["J_star"].shape == (3,)
    np.testing.assert_array_equal(surf["x_star"][:, 0], surf["x_star"][:, 2])
    assert solve(make_problem(1), 0.5, T1).source == "closed-form"
    assert solve(p, 0.5, t).source == "shooting"


def test_bad_time_grid():
    with pytest.raises(ValueError):
        shoot_tpbvp(make_problem(2), 1.0, np.array([0.0, 1.0, 0.5, 2.0]))
    with pytest.raises(ValueError):
        shoot_tpbvp(make_problem(2), 1.0, np.linspace(0, 1.5, 5))


def test_problem_without_closed_form_control():
    from dataclasses import replace
    p = replace(make_problem(2), stationary_u=None)
    with pytest.raises(UnsupportedProblem):
        shoot_tpbvp(p, 1.0, np.linspace(0, 2, 11))
