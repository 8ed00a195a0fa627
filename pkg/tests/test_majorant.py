import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from ambistop.bm_harmonic import ExponentPair
from ambistop.errors import DomainError, UnboundedValue
from ambistop.majorant import MajorantSolver, solve_problem, sup_ratio, value_at, worst_case_prior
from ambistop.model import AmbiguityProblem, RewardFunction, SolverSettings, arithmetic_bm, geometric_bm


def straddle(kappa=1.0, mu=0.0, sigma=1.0, r=4.0):
    return AmbiguityProblem(arithmetic_bm(mu, sigma), kappa, r, RewardFunction("Straddle"))


@pytest.fixture(scope="module")
def bm1_solver():
    return MajorantSolver(straddle())


def _straddle_reference():
    # h_0(y) = 2/3 e^{-2y} + 1/3 e^{4y} for y >= 0; v(0) = max_y y / h_0(y) by symmetry
    res = minimize_scalar(lambda y: -y / (2 / 3 * math.exp(-2 * y) + 1 / 3 * math.exp(4 * y)),
                          bounds=(0.01, 2.0), method="bounded", options={"xatol": 1e-12})
    return -res.fun, res.x


def test_straddle_value_against_direct_maximization(bm1_solver):
    ref_v, ref_b = _straddle_reference()
    pt = bm1_solver.value_at(0.0)
    assert pt.v == pytest.approx(ref_v, rel=1e-10)
    assert pt.argmax_right == pytest.approx(ref_b, abs=1e-6)
    assert pt.c_star == 0.0 and pt.case == 3
    # frozen from this run, agreeing with the direct maximization above
    assert pt.v == pytest.approx(0.2079985213347, rel=1e-11)
    assert pt.argmax_right == pytest.approx(0.35272716930127485, abs=1e-12)


def test_straddle_stopping_set(bm1_solver):
    sol = bm1_solver.solve(np.linspace(-1, 1, 41))
    (lo1, hi1), (lo2, hi2) = sol.stopping_set
    assert lo1 == -math.inf and hi2 == math.inf
    assert hi1 == pytest.approx(-0.35272716930127485, abs=1e-12)
    assert lo2 == pytest.approx(0.35272716930127485, abs=1e-12)
    g = sol.g
    inside = sol.in_stopping_set
    assert np.all(sol.v >= g * (1 - 1e-12))
    np.testing.assert_array_equal(inside, np.abs(sol.v - g) <= 1e-8 * g)


def test_value_at_symmetric_points(bm1_solver):
    a, b = bm1_solver.value_at(0.2), bm1_solver.value_at(-0.2)
    assert a.v == pytest.approx(b.v, rel=1e-10)
    assert a.c_star == pytest.approx(-b.c_star, abs=1e-9)


def test_sup_ratio_balanced_at_optimum(bm1_solver):
    prof = bm1_solver.sup_ratio(0.0, 0.0)
    assert prof.sup_left == pytest.approx(prof.sup_right, rel=1e-12)
    left = bm1_solver.sup_ratio(0.0, 0.0, side="left")
    assert math.isnan(left.sup_right)


def test_worst_case_prior(bm1_solver):
    sel = bm1_solver.worst_case_prior(0.0)
    assert sel.kind == "merge" and sel.c == 0.0 and sel.kappa == 1.0


@pytest.mark.parametrize("mu, kappa", [(0.0, 0.5), (0.3, 0.2), (-0.4, 1.0)])
def test_call_worst_case_is_constant_negative_drift(mu, kappa):
    # for an increasing reward the worst prior pushes down everywhere: h = exp(alpha2 x)
    K, r = 0.5, 1.0
    p = AmbiguityProblem(arithmetic_bm(mu, 1.0), kappa, r, RewardFunction("Call", K=K))
    a2 = ExponentPair.from_params(mu, 1.0, kappa, r).alpha2
    y_star = K + 1.0 / a2
    solver = MajorantSolver(p)
    for x in (-1.0, 0.0, y_star - 0.1):
        pt = solver.value_at(x)
        assert pt.c_star == -math.inf and pt.case == 2
        assert pt.v == pytest.approx((y_star - K) * math.exp(a2 * (x - y_star)), rel=1e-10)
    assert worst_case_prior(p, 0.0).theta == -kappa


def test_put_worst_case_is_constant_positive_drift():
    K, r, mu, kappa = 0.5, 1.0, 0.1, 0.3
    p = AmbiguityProblem(arithmetic_bm(mu, 1.0), kappa, r, RewardFunction("Put", K=K))
    b1 = ExponentPair.from_params(mu, 1.0, kappa, r).beta1
    y_star = K + 1.0 / b1
    v, c, lam = value_at(p, 1.0)
    assert c == math.inf
    assert v == pytest.approx((K - y_star) * math.exp(b1 * (1.0 - y_star)), rel=1e-10)


def test_gbm_call_without_ambiguity():
    p = AmbiguityProblem(geometric_bm(0.0, 1.0), 0.0, 1.0, RewardFunction("Call", K=1.0))
    sol = solve_problem(p, xs=[0.5, 1.0, 1.5, 3.0])
    np.testing.assert_allclose(sol.v, [0.0625, 0.25, 0.5625, 2.0], rtol=1e-12)
    assert sol.stopping_set == [(2.0, math.inf)] or sol.stopping_set[0][0] == pytest.approx(2.0, rel=1e-9)


def test_unbounded_value_reported():
    p = AmbiguityProblem(geometric_bm(1.0, 1.0), 0.0, 1.0, RewardFunction("Call", K=1.0))
    with pytest.raises(UnboundedValue):
        value_at(p, 1.0)


def test_x_outside_grid():
    with pytest.raises(DomainError):
        value_at(straddle(), 50.0)


def test_zero_reward_everywhere_on_grid():
    p = AmbiguityProblem(arithmetic_bm(0.0, 1.0), 0.5, 1.0, RewardFunction("Call", K=100.0))
    pt = MajorantSolver(p, SolverSettings(x_min=-2, x_max=2)).value_at(0.0)
    assert pt.v == 0.0


def test_ode_path_agrees_with_closed_form():
    p = straddle(kappa=0.5, mu=0.2, r=2.0)
    xs = [-0.5, 0.0, 0.3]
    a = MajorantSolver(p, SolverSettings(path="analytic")).solve(xs)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        o = MajorantSolver(p, SolverSettings(path="ode")).solve(xs)
    np.testing.assert_allclose(o.v, a.v, rtol=1e-6)
    np.testing.assert_allclose(o.c_star, a.c_star, atol=1e-4)


def test_step_linear_regime_one():
    p = AmbiguityProblem(arithmetic_bm(0.0, 1.0), 0.25, 0.5, RewardFunction("StepLinear"))
    solver = MajorantSolver(p, SolverSettings(x_min=-10.0, x_max=15.0))
    stop = solver.stopping_set(np.linspace(-4, 6, 101))
    assert len(stop) == 2
    assert stop[0] == (-math.inf, 0.0)
    assert stop[1][0] == pytest.approx(1.25914, abs=1e-5)


bm_params = st.tuples(st.floats(-0.5, 0.5), st.floats(0.5, 2.0), st.floats(0.0, 1.0), st.floats(0.5, 4.0))


@settings(max_examples=25)
@given(bm_params, st.floats(-1.5, 1.5), st.sampled_from(["Straddle", "Call", "Put"]))
def test_value_dominates_reward(params, x, family):
    mu, sigma, kappa, r = params
    p = AmbiguityProblem(arithmetic_bm(mu, sigma), kappa, r, RewardFunction(family, K=0.3))
    pt = MajorantSolver(p, SolverSettings(grid_n=801)).value_at(x)
    assert pt.v >= p.reward(x) * (1 - 1e-12)
    assert pt.lambda_star >= 0


@settings(max_examples=20)
@given(bm_params, st.floats(-1.0, 1.0), st.floats(0.05, 0.5))
def test_value_decreases_with_ambiguity(params, x, dk):
    mu, sigma, kappa, r = params
    s = SolverSettings(grid_n=801)
    lo = MajorantSolver(straddle(kappa, mu, sigma, r), s).value_at(x).v
    hi = MajorantSolver(straddle(kappa + dk, mu, sigma, r), s).value_at(x).v
    assert hi <= lo + 1e-10


@settings(max_examples=20)
@given(bm_params, st.floats(-1.0, 1.0))
def test_balanced_suprema_in_case_three(params, x):
    mu, sigma, kappa, r = params
    solver = MajorantSolver(straddle(max(kappa, 0.05), mu, sigma, r), SolverSettings(grid_n=801))
    pt = solver.value_at(x)
    if pt.case == 3:
        prof = solver.sup_ratio(pt.c_star, x)
        assert prof.sup_left == pytest.approx(prof.sup_right, rel=1e-6)
        assert pt.v == pytest.approx(prof.sup * math.exp(float(solver.family.log_h(pt.c_star, x))), rel=1e-9)


def test_module_level_sup_ratio():
    prof = sup_ratio(straddle(), 0.0, 0.0)
    assert prof.sup == pytest.approx(0.2079985213347, rel=1e-11)
