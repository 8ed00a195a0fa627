import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambistop.errors import DomainError, ParseError, ValidationError
from ambistop.model import (
    AmbiguityProblem,
    Coefficient,
    CrashProblem,
    RewardFunction,
    arithmetic_bm,
    constant_theta,
    custom_diffusion,
    dump_config,
    eval_reward,
    geometric_bm,
    load_config,
    load_problem,
    merge_point,
    piecewise_theta,
)

BM1 = """\
problem.kind: ambiguity
diffusion.family: ArithmeticBM
diffusion.mu: 0
diffusion.sigma: 1
ambiguity.kappa: 1
discount.r: 4
reward.family: Straddle
"""

GBM1 = """\
problem.kind: crash
diffusion.family: GeometricBM
diffusion.mu: 0
diffusion.sigma: 1
discount.r: 1
reward.family: Call
reward.K: 1
crash.factor: 0.5
"""


def test_load_ambiguity_problem():
    p = load_problem(BM1)
    assert isinstance(p, AmbiguityProblem)
    assert (p.kappa, p.r) == (1.0, 4.0)
    assert p.diffusion.family == "ArithmeticBM"
    assert p.reward.family == "Straddle" and p.reward.K == 0.0


def test_load_crash_problem():
    p = load_problem(GBM1)
    assert isinstance(p, CrashProblem)
    assert p.crash_factor == 0.5 and p.reward.K == 1.0


@pytest.mark.parametrize(
    "patch, exc, msg",
    [
        ({"diffusion.sigma": 0}, ValidationError, "sigma must be positive"),
        ({"ambiguity.kappa": -1}, ValidationError, "kappa"),
        ({"discount.r": 0}, ValidationError, "r must be positive"),
        ({"reward.family": "Binary"}, ValidationError, "unknown reward"),
        ({"solver.grid_n": 4}, ValidationError, "grid_n"),
        ({"diffusion.mu": "abc"}, ParseError, "numeric"),
    ],
)
def test_invalid_configs(patch, exc, msg):
    with pytest.raises(exc, match=msg):
        load_config(BM1, patch)


@pytest.mark.parametrize("factor", [0.0, 1.0, 1.5, -0.2])
def test_crash_factor_outside_unit_interval(factor):
    with pytest.raises(ValidationError, match="crash factor"):
        load_config(GBM1, {"crash.factor": factor})


def test_unknown_key_is_an_error():
    with pytest.raises(ParseError, match="unknown config keys: reward.k"):
        load_problem(BM1 + "reward.k: 1\n")


def test_malformed_text():
    with pytest.raises(ParseError):
        load_problem("diffusion.family: [unclosed")
    with pytest.raises(ParseError):
        load_problem("- just\n- a list\n")


def test_exponent_without_dot_is_numeric():
    # YAML 1.1 reads 1e-9 as a string
    cfg = load_config(BM1 + "solver.tol: 1e-9\n")
    assert cfg.solver.tol == 1e-9


def test_crash_needs_nondecreasing_reward():
    with pytest.raises(ValidationError, match="non-decreasing"):
        load_config(GBM1, {"reward.family": "Put"})


@pytest.mark.parametrize(
    "reward, x, expected",
    [
        (RewardFunction("Straddle"), -2.0, 2.0),
        (RewardFunction("StepLinear"), 0.0, 1.0),
        (RewardFunction("StepLinear"), 1e-12, 1e-12),
        (RewardFunction("StepLinear"), -5.0, 1.0),
        (RewardFunction("Call", K=1.0), 0.5, 0.0),
        (RewardFunction("Call", K=1.0), 3.0, 2.0),
        (RewardFunction("Put", K=1.0), 0.25, 0.75),
        (RewardFunction("Tabulated", xs=(0.0, 1.0, 2.0), ys=(0.0, 2.0, 2.0)), 0.5, 1.0),
    ],
)
def test_eval_reward(reward, x, expected):
    assert eval_reward(reward, x) == expected


def test_eval_reward_outside_interval():
    with pytest.raises(DomainError):
        eval_reward(RewardFunction("Call", K=1.0), -1.0, geometric_bm(0.0, 1.0))


def test_scaled_reward_and_slopes():
    g = RewardFunction("Call", K=1.0).scaled(0.5)
    assert g(4.0) == 1.0 and g(2.0) == 0.0
    assert g.slope(2.0, "right") == 0.5 and g.slope(2.0, "left") == 0.0
    assert g.breakpoints() == (2.0,)


def test_custom_diffusion_needs_positive_sigma():
    with pytest.raises(ValidationError, match="sigma must be positive"):
        custom_diffusion(Coefficient((0.0,)), Coefficient((0.5, -1.0)))
    with pytest.raises(ValidationError):
        Coefficient()
    with pytest.raises(ValidationError):
        Coefficient(table=((1.0, 1.0), (0.0, 1.0)))


def test_tabulated_coefficient_is_constant_beyond_table():
    c = Coefficient(table=((-1.0, 2.0), (1.0, 4.0)))
    assert c(-5.0) == 2.0 and c(0.0) == 3.0 and c(7.0) == 4.0


def test_merge_point_sign_convention():
    sel = merge_point(0.3, 0.5)
    assert sel(0.2) == 0.5
    assert sel(0.3) == -0.5
    assert sel(1.0) == -0.5
    breaks, values = sel.piecewise_constant()
    assert breaks.tolist() == [0.3] and values.tolist() == [0.5, -0.5]


def test_selector_rejects_large_theta():
    with pytest.raises(ValidationError):
        constant_theta(1.5, 1.0)
    with pytest.raises(ValidationError):
        piecewise_theta([(-1.0, 1.0, -2.0)], 1.0)


def test_piecewise_representation():
    sel = piecewise_theta([(-math.inf, -1.0, 0.2), (-1.0, 2.0, -0.3)], 0.5)
    breaks, values = sel.piecewise_constant()
    assert breaks.tolist() == [-1.0, 2.0]
    assert values.tolist() == [0.2, -0.3, 0.0]
    assert sel(-1.0) == -0.3 and sel(2.0) == 0.0


kappas = st.floats(0.0, 3.0)
states = st.floats(-50.0, 50.0)


@st.composite
def selectors(draw):
    k = draw(kappas)
    kind = draw(st.sampled_from(["merge", "constant", "piecewise"]))
    if kind == "merge":
        return merge_point(draw(states), k)
    if kind == "constant":
        return constant_theta(draw(st.floats(-k, k)), k)
    cuts = sorted(draw(st.lists(states, min_size=1, max_size=5, unique=True)))
    edges = [-math.inf] + cuts + [math.inf]
    return piecewise_theta([(a, b, draw(st.floats(-k, k))) for a, b in zip(edges, edges[1:])], k)


@given(selectors(), st.lists(states, min_size=1, max_size=20))
def test_selector_bounded_by_kappa(sel, xs):
    assert np.all(np.abs(sel(np.array(xs))) <= sel.kappa)


@given(selectors(), st.lists(states, min_size=1, max_size=20))
def test_step_representation_matches_selector(sel, xs):
    breaks, values = sel.piecewise_constant()
    xs = np.array(xs)
    assert len(values) == len(breaks) + 1
    idx = np.searchsorted(breaks, xs, side="right")
    np.testing.assert_array_equal(values[idx], sel(xs))


@given(st.floats(-5, 5), st.floats(0.01, 1.0), st.floats(-50, 50))
def test_merge_point_sign(c, k, x):
    assert merge_point(c, k)(x) == (k if x < c else -k)


positive = st.floats(0.05, 10.0)
rewards = st.one_of(
    st.builds(lambda k: RewardFunction("Call", K=k), positive),
    st.builds(lambda k: RewardFunction("Put", K=k), positive),
    st.builds(lambda k: RewardFunction("Straddle", K=k), st.floats(-3, 3)),
    st.just(RewardFunction("StepLinear")),
)


@given(
    st.sampled_from(["ArithmeticBM", "GeometricBM"]),
    st.floats(-1, 1),
    positive,
    st.floats(0, 2),
    positive,
    rewards,
    st.integers(16, 5000),
)
def test_config_round_trip(family, mu, sigma, kappa, r, reward, grid_n):
    diffusion = arithmetic_bm(mu, sigma) if family == "ArithmeticBM" else geometric_bm(mu, sigma)
    text = BM1
    cfg = load_config(text, {
        "diffusion.family": family, "diffusion.mu": mu, "diffusion.sigma": sigma, "ambiguity.kappa": kappa,
        "discount.r": r, "reward.family": reward.family, "solver.grid_n": grid_n,
        **({"reward.K": reward.K} if reward.family != "StepLinear" else {}),
    })
    assert cfg.problem == AmbiguityProblem(diffusion, kappa, r, reward)
    assert load_config(dump_config(cfg)) == cfg


def test_round_trip_custom_and_tabulated():
    text = """\
problem.kind: ambiguity
diffusion.family: Custom
diffusion.mu: [0.1, -0.5]
diffusion.sigma: [[-1, 0.8], [0, 1.0], [2, 1.3]]
ambiguity.kappa: 0.25
discount.r: 1
reward.family: Tabulated
reward.x: [-5, 0, 5]
reward.y: [5, 0, 5]
solver.x_min: -3
solver.x_max: 3
"""
    cfg = load_config(text)
    assert load_config(dump_config(cfg)) == cfg
    assert cfg.problem.diffusion.sigma(0.5) == pytest.approx(1.075)
