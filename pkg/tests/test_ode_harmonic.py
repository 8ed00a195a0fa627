import math

import numpy as np
import pytest

from ambistop.bm_harmonic import ExponentPair, make_hc
from ambistop.errors import DomainError, NonNaturalBoundary, TruncationError
from ambistop.model import AmbiguityProblem, Coefficient, RewardFunction, arithmetic_bm, custom_diffusion, geometric_bm
from ambistop.ode_harmonic import INCREASING, DECREASING, ODEFamily, check_natural_boundaries, gamma_coeffs, solve_fundamental


@pytest.fixture(scope="module")
def bm_family():
    p = AmbiguityProblem(arithmetic_bm(0.2, 1.0), 0.5, 2.0, RewardFunction("Straddle"))
    return p, ODEFamily(p, (-4.0, 4.0), grid_n=1025)


def test_fundamental_solution_is_an_exponential():
    d = arithmetic_bm(0.0, 1.0)
    inc = solve_fundamental(d, -1.0, 4.0, INCREASING, (-3.0, 3.0), grid_n=513)
    dec = solve_fundamental(d, -1.0, 4.0, DECREASING, (-3.0, 3.0), grid_n=513)
    # drift -1: roots of 1/2 z^2 - z - 4 are 4 and -2
    np.testing.assert_allclose(inc.u, 4.0, rtol=1e-8)
    np.testing.assert_allclose(dec.u, -2.0, rtol=1e-8)
    np.testing.assert_allclose(inc.log_value(2.0) - inc.log_value(-1.0), 12.0, rtol=1e-8)


def test_residual_of_tabulated_solution():
    d = custom_diffusion(Coefficient((0.1, -0.4)), Coefficient(table=((-2.0, 0.8), (0.0, 1.2), (2.0, 0.9))))
    for direction in (INCREASING, DECREASING):
        sol = solve_fundamental(d, 0.3, 1.0, direction, (-4.0, 4.0), grid_n=1024)
        resid = sol.residual(d)
        assert np.max(np.abs(resid)) < 1e-6


def test_hc_matches_closed_form(bm_family):
    p, fam = bm_family
    e = ExponentPair.from_params(0.2, 1.0, 0.5, 2.0)
    xs = np.linspace(-2.5, 2.5, 41)
    for c in (-1.0, 0.0, 0.7):
        exact = make_hc(e, c)
        np.testing.assert_allclose(fam.log_h(c, xs), exact.log_value(xs), atol=1e-7)
        np.testing.assert_allclose(fam.dlog_h(c, xs), exact.dlog(xs), atol=1e-6)


def test_limits_match_closed_form(bm_family):
    _, fam = bm_family
    e = ExponentPair.from_params(0.2, 1.0, 0.5, 2.0)
    xs = np.linspace(-2, 2, 11)
    for c in (-math.inf, math.inf):
        got = fam.log_h(c, xs) - fam.log_h(c, 0.0)
        np.testing.assert_allclose(got, make_hc(e, c).log_value(xs), atol=1e-7)


def test_merge_normalization(bm_family):
    p, fam = bm_family
    for c in (-1.3, 0.0, 2.1):
        h = fam.hc(c)
        assert h(c) == pytest.approx(1.0, abs=1e-12)
        assert abs(float(h.dlog(c))) < 1e-9
        for side in ("left", "right"):
            assert h.second_derivative(c, side) == pytest.approx(p.r / 0.5, rel=1e-6)


def test_gamma_coefficients_reproduce_value(bm_family):
    _, fam = bm_family
    g1, g2, g3, g4 = gamma_coeffs(fam.tables, 0.4)
    t = fam.tables
    # h_c(c) = 1 from either pair
    assert g1 * t[0](0.4) + g2 * t[1](0.4) == pytest.approx(1.0, rel=1e-10)
    assert g3 * t[2](0.4) + g4 * t[3](0.4) == pytest.approx(1.0, rel=1e-10)


def test_outside_table_is_an_error(bm_family):
    _, fam = bm_family
    with pytest.raises(DomainError):
        fam.log_h(0.0, 10.0)


def test_non_natural_boundary_rejected():
    # Brownian motion on (0, inf) reaches 0: a regular boundary
    d = custom_diffusion(Coefficient((0.0, 0.0)), Coefficient((1.0,)), a=0.0, b=math.inf)
    with pytest.raises(NonNaturalBoundary):
        check_natural_boundaries(d, 0.0)
    # GBM coefficients vanish at 0, but a drift shift kappa does not
    g = custom_diffusion(Coefficient((0.0, 0.1)), Coefficient((0.0, 0.3)), a=0.0, b=math.inf)
    check_natural_boundaries(g, 0.0)
    with pytest.raises(NonNaturalBoundary):
        check_natural_boundaries(g, 0.2)


def test_explosive_volatility_fails_to_forget():
    # sigma ~ x^2 makes infinity an entrance boundary; the run-in never forgets its start
    d = custom_diffusion(Coefficient((0.0,)), Coefficient((0.5, 0.0, 1.0)))
    with pytest.raises(TruncationError):
        solve_fundamental(d, 0.0, 1.0, DECREASING, (-3.0, 3.0), grid_n=256)


def test_gbm_tables_give_powers():
    p = AmbiguityProblem(geometric_bm(0.0, 1.0), 0.0, 1.0, RewardFunction("Call", K=1.0))
    fam = ODEFamily(p, (0.02, 50.0), grid_n=2048)
    ys = np.array([0.1, 0.5, 2.0, 10.0])
    inc = fam.tables[0]
    np.testing.assert_allclose(inc.log_value(ys) - inc.log_value(1.0), 2.0 * np.log(ys), atol=1e-7)
