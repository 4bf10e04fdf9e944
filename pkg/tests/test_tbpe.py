import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import expect, measures, tbpe, zoo
from riskmdp.oracle import best_deterministic_reward_based
from riskmdp.preprocess import normalize

from support import acyclic_models


def test_penalty_functions():
    pen = tbpe.make_penalty("tbp", 3, 2)
    assert [pen(x) for x in (0, 1, 3, 5)] == [-6, -3, 3, 5]
    cr = tbpe.make_penalty("crinkle2", 2)
    assert [cr(x) for x in (0, 1, 2, 3)] == [0, 2, 4, 5]
    assert cr.shift == 2 and pen.shift == 0
    custom = tbpe.make_penalty("custom", 2, breakpoints=[(0, -4), (1, 0)])
    assert [custom(x) for x in (0, F(1, 2), 1, F(3, 2), 2, 7)] == [-4, -2, 0, 1, 2, 7]


@pytest.mark.parametrize(
    "kind, kwargs",
    [
        ("tbp", {"lam": 0}),
        ("custom", {"breakpoints": [(1, 0)]}),
        ("custom", {"breakpoints": [(0, 0), (3, 2)]}),
        ("nope", {}),
    ],
)
def test_bad_penalties(kind, kwargs):
    with pytest.raises(tbpe.PenaltyError):
        tbpe.make_penalty(kind, 2, **kwargs)


def test_parse_breakpoints():
    assert tbpe.parse_breakpoints("0 -1  # start\n\n1 1/2\n") == [(0, -1), (1, F(1, 2))]


@pytest.mark.parametrize(
    "model, lam, t, value",
    [
        (zoo.randomization_mdp(), 1, 1, F(5, 4)),
        (zoo.gamble_mdp(), 1, 30, F(40)),
        (zoo.heavy_loop_mdp(101), 1, 5, F(99)),
    ],
)
def test_known_values(model, lam, t, value):
    assert tbpe.solve_tbpe(model, tbpe.make_penalty("tbp", t, lam)).value == value


def test_threshold_zero_is_emax():
    for m in [*acyclic_models().values(), zoo.loop_mdp()]:
        sol = tbpe.solve_tbpe(m, tbpe.make_penalty("tbp", 0, 3))
        assert sol.value == expect.max_expected_reward(normalize(m)).values[normalize(m).mdp.initial]


def test_unfolding_size():
    m = normalize(zoo.scaling_family(5)).mdp
    for t in (1, F(5, 2), 7):
        u = tbpe.build_unfolding_t(m, tbpe.make_penalty("tbp", t, 1))
        assert len(u.mdp.states) == len(m.states) * (math.ceil(t) + 1) + 1


def test_scheduler_achieves_value():
    m = zoo.gamble_mdp()
    pen = tbpe.make_penalty("tbp", 30, 1)
    sol = tbpe.solve_tbpe(m, pen)
    d = measures.distribution_of(m, sol.scheduler)
    assert measures.penalized(d, measures.PenaltySpec("tbpe", 1, 30)) == sol.value


def test_float_mode_close_to_exact():
    m = zoo.loop_mdp(F(1, 2))
    pen = tbpe.make_penalty("tbp", 3, 2)
    exact = tbpe.solve_tbpe(m, pen).value
    approx = tbpe.solve_tbpe(m, pen, exact=False, tolerance=1e-12)
    assert not approx.exact and abs(approx.value - float(exact)) < 1e-9


def test_crinkle_expectations():
    c = zoo.distribution_chain({1: F(3, 4), 2: F(1, 4)})
    assert tbpe.expectation_of_penalty(c, tbpe.make_penalty("crinkle2", 2)) == F(5, 2)
    assert tbpe.expectation_of_penalty(c, tbpe.make_penalty("crinkle2", 1)) == F(9, 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 6), st.sampled_from([F(1, 2), F(1), F(3)]))
def test_matches_exhaustive_reward_based_search(seed, t, lam):
    m = normalize(zoo.random_acyclic_mdp(seed, n_states=5, max_actions=2, max_reward=3)).mdp
    best, _ = best_deterministic_reward_based(m, "tbpe", lam, t)
    assert tbpe.solve_tbpe(m, tbpe.make_penalty("tbp", t, lam)).value == best


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_custom_penalty_matches_distribution(seed, t):
    c = zoo.random_acyclic_chain(seed, n_states=5)
    pen = tbpe.make_penalty("custom", t, breakpoints=[(0, -t), (t, t)])
    d = measures.exact_distribution(c)
    expected = sum((p * pen(v) for v, p in d.atoms), F(0))
    assert tbpe.expectation_of_penalty(c, pen) == expected
