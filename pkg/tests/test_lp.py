import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import linprog

from polytraverse import (ConstraintSystem, InvalidInputError, LinearConstraint, interior_point,
                          optimize_linear, solve_feasibility, use_tolerances)
from polytraverse._config import get_tolerances
from polytraverse.lp import INFEASIBLE, OPTIMAL, UNBOUNDED
from polytraverse.lp import box_system


def system(rows, dim=None, strict=None):
    """rows of (a, b) meaning a.x <= b"""
    A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), -1 if rows else dim)
    b = np.array([r[1] for r in rows], dtype=float)
    return ConstraintSystem(A, b, strict)


def check_witness(sys, x):
    tol = get_tolerances()
    m = sys.margins(x)
    need = np.where(sys.strict, tol.eps_int, -tol.eps_num)
    assert np.all(m >= need - 1e-12)


# ---- feasibility ---------------------------------------------------------


def test_single_halfspace_feasible():
    res = solve_feasibility(system([([1.0], 1.0)]))
    assert res.feasible
    assert res.witness[0] <= 1.0


def test_conflicting_bounds_infeasible():
    res = solve_feasibility(system([([1.0], -1.0), ([-1.0], -1.0)]))
    assert not res.feasible
    assert res.witness is None


def test_quadrant_meets_box():
    sys = system([([-1, 0], 0), ([0, -1], 0)]).stack(box_system([-1, -1], [1, 1]))
    res = solve_feasibility(sys)
    assert res.feasible
    assert np.all(res.witness >= -1e-9) and np.all(res.witness <= 1 + 1e-9)


def test_strict_rows_need_interior_margin():
    # x <= 0 strictly and x >= 0: empty for open rows, a point for closed ones
    closed = system([([1.0], 0.0), ([-1.0], 0.0)])
    assert solve_feasibility(closed).feasible
    open_ = ConstraintSystem(closed.A, closed.b, np.array([True, False]))
    assert not solve_feasibility(open_).feasible


def test_trivial_system_costs_no_lp():
    res = solve_feasibility(ConstraintSystem(np.zeros((1, 2)), np.array([1.0])))
    assert res.feasible and res.lp_runs == 0
    res = solve_feasibility(ConstraintSystem(np.zeros((1, 2)), np.array([-1.0])))
    assert not res.feasible and res.lp_runs == 0


def test_from_constraints_matches_matrix_form():
    cs = [LinearConstraint([1, 0], 1.0), LinearConstraint([0, 1], 2.0, strict=True)]
    sys = ConstraintSystem.from_constraints(cs)
    assert sys.A.tolist() == [[1, 0], [0, 1]]
    assert sys.strict.tolist() == [False, True]


def test_dimension_mismatch_is_rejected():
    with pytest.raises(InvalidInputError):
        ConstraintSystem(np.ones((2, 2)), np.ones(3))
    with pytest.raises(InvalidInputError):
        optimize_linear([1, 2, 3], "max", box_system([0, 0], [1, 1]))


# ---- optimisation --------------------------------------------------------


def test_box_vertex_maximum():
    sol = optimize_linear([1, 1], "max", box_system([-1, -1], [1, 1]))
    assert sol.status == OPTIMAL
    assert sol.value == pytest.approx(2.0)
    np.testing.assert_allclose(sol.argopt, [1, 1])


def test_min_over_halfspace_and_box():
    sys = system([([-1, 0], -0.5)]).stack(box_system([0, 0], [1, 1]))
    assert optimize_linear([1, 0], "min", sys).value == pytest.approx(0.5)


def test_max_with_coupled_rows_matches_grid():
    sys = system([([1, -1], 0.0), ([0, 1], 0.3)]).stack(box_system([0, 0], [1, 1]))
    sol = optimize_linear([1, 0], "max", sys)
    assert sol.value == pytest.approx(0.3)
    g = np.linspace(0, 1, 1001)
    X, Y = np.meshgrid(g, g)
    ok = (X <= Y) & (Y <= 0.3)
    assert X[ok].max() <= sol.value + 1e-12


def test_unbounded_and_infeasible_are_statuses():
    assert optimize_linear([1.0], "max", system([([-1.0], 0.0)])).status == UNBOUNDED
    bad = system([([1.0], -1.0), ([-1.0], -1.0)])
    assert optimize_linear([1.0], "max", bad).status == INFEASIBLE


# ---- interior point ------------------------------------------------------


def test_interval_centre():
    res = interior_point(box_system([0.0], [1.0]))
    assert res.witness[0] == pytest.approx(0.5)


def test_triangle_incentre():
    sys = system([([-1, 0], 0), ([0, -1], 0), ([1, 1], 2)])
    res = interior_point(sys)
    r = 2 - math.sqrt(2)
    np.testing.assert_allclose(res.witness, [r, r], atol=1e-9)
    # slack of the normalised rows equals the inradius; confirm by a coarse grid
    g = np.linspace(0, 2, 401)
    X, Y = np.meshgrid(g, g)
    slack = np.minimum(np.minimum(X, Y), (2 - X - Y) / math.sqrt(2))
    assert slack.max() <= r + 1e-9
    assert slack.max() >= r - 0.01


def test_interior_point_infeasible():
    assert not interior_point(system([([1.0], 0.0), ([-1.0], -1.0)])).feasible


def test_interior_point_all_trivial_is_invalid():
    with pytest.raises(InvalidInputError):
        interior_point(ConstraintSystem(np.zeros((2, 2)), np.ones(2)))


def test_tolerance_override_changes_open_row_verdict():
    sys = ConstraintSystem(np.array([[1.0], [-1.0]]), np.array([1e-6, 0.0]), np.array([True, True]))
    assert solve_feasibility(sys).feasible
    with use_tolerances(eps_int=1e-5):
        assert not solve_feasibility(sys).feasible


# ---- properties ------------------------------------------------------------

small = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def random_systems(draw, max_rows=8):
    P = draw(st.integers(1, 3))
    m = draw(st.integers(1, max_rows))
    A = np.array(draw(st.lists(st.lists(small, min_size=P, max_size=P), min_size=m, max_size=m)))
    b = np.array(draw(st.lists(small, min_size=m, max_size=m)))
    strict = np.array(draw(st.lists(st.booleans(), min_size=m, max_size=m)))
    return ConstraintSystem(A, b, strict).stack(box_system(-5 * np.ones(P), 5 * np.ones(P)))


@settings(max_examples=150, deadline=None)
@given(random_systems(), st.data())
def test_feasibility_is_monotone_under_row_removal(sys, data):
    res = solve_feasibility(sys)
    if res.feasible:
        check_witness(sys, res.witness)
        i = data.draw(st.integers(0, len(sys) - 1))
        assert solve_feasibility(sys.without(i)).feasible


@settings(max_examples=150, deadline=None)
@given(random_systems())
def test_feasibility_agrees_with_scipy(sys):
    tol = get_tolerances()
    b = sys.b - np.where(sys.strict, tol.eps_int, 0.0)
    ref = linprog(np.zeros(sys.dim), A_ub=sys.A, b_ub=b, bounds=[(None, None)] * sys.dim, method="highs")
    ours = solve_feasibility(sys)
    if ours.feasible:
        check_witness(sys, ours.witness)
    if ours.feasible != (ref.status == 0):
        # verdicts may only differ on systems that are feasible to within rounding
        x = ours.witness if ours.feasible else ref.x
        assert np.max(sys.A @ x - b) <= 1e-7


@settings(max_examples=150, deadline=None)
@given(random_systems(), st.lists(small, min_size=3, max_size=3))
def test_optimum_agrees_with_scipy(sys, c):
    c = np.array(c[: sys.dim])
    closed = sys.closed()
    sol = optimize_linear(c, "min", closed)
    ref = linprog(c, A_ub=closed.A, b_ub=closed.b, bounds=[(None, None)] * sys.dim, method="highs")
    if ref.status == 0:
        assert sol.status == OPTIMAL
        assert sol.value == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
        assert np.max(closed.A @ sol.argopt - closed.b) <= 1e-8
    elif ref.status == 2:
        assert sol.status == INFEASIBLE


@settings(max_examples=60, deadline=None)
@given(random_systems(max_rows=4), st.lists(small, min_size=2, max_size=2))
def test_optimum_bounds_grid_envelope_2d(sys, c):
    if sys.dim != 2:
        return
    c = np.asarray(c)
    # objectives below the simplex reduced-cost tolerance are indistinguishable from zero
    assume(np.linalg.norm(c) >= 1e-6)
    closed = sys.closed()
    norms = np.linalg.norm(closed.A, axis=1)
    assume(np.all(norms > 0))
    centre = interior_point(closed)
    if not centre.feasible:
        return
    r = float(np.min((closed.b - closed.A @ centre.witness) / norms))
    h = 0.05
    g = np.arange(-5, 5 + h / 2, h)
    X = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    inside = np.all(X @ closed.A.T <= closed.b + 1e-12, axis=1)
    sol = optimize_linear(c, "max", closed)
    assert sol.status == OPTIMAL
    if not inside.any():
        return
    grid_max = float(np.max(X[inside] @ c))
    assert sol.value >= grid_max - 1e-9
    # the set holds the hull of the optimal vertex and the inscribed ball, so a
    # grid point lies within t * (diameter + r) of the optimum along c
    if r > h:
        t = h / (math.sqrt(2) * r)
        assert sol.value <= grid_max + np.linalg.norm(c) * t * (10 * math.sqrt(2) + r) + 1e-9
    assert np.all((closed.A @ sol.argopt - closed.b) / norms <= 1e-9)
