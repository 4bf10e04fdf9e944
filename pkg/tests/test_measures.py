import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import measures, zoo
from riskmdp.model import Chain, CounterScheduler, MemorylessRandomized, RewardBasedRandomized
from riskmdp.oracle import enumerate_paths, oracle_objective

from support import acyclic_models, random_reward_based


def policy(m, **choice):
    base = {s: {m.enabled(s)[0]: 1} for s in m.states if not m.is_trap(s)}
    base.update({s: dict(d) for s, d in choice.items()})
    return MemorylessRandomized(base)


def test_randomization_model_table():
    m = zoo.randomization_mdp()
    rows = {
        "alpha": policy(m, s_init={"alpha": 1}),
        "half": policy(m, s_init={"alpha": F(1, 2), "beta": F(1, 2)}),
        "beta": policy(m, s_init={"beta": 1}),
    }
    got = {k: measures.deviation_report(measures.distribution_of(m, s)) for k, s in rows.items()}
    assert [got[k].expectation for k in rows] == [F(3, 4), F(1), F(5, 4)]
    assert [got[k].mad for k in rows] == [F(3, 8), F(1, 4), F(3, 8)]
    assert got["beta"].variance == F(3, 16)


def test_exact_distribution_of_chain():
    c = zoo.distribution_chain({1: F(3, 4), 2: F(1, 4)})
    d = measures.exact_distribution(c)
    assert d.atoms == ((1, F(3, 4)), (2, F(1, 4)))
    assert d.tail_mass == 0


def test_cyclic_chain_needs_epsilon():
    c = zoo.point_chain(1)
    assert measures.exact_distribution(c).atoms == ((1, F(1)),)
    loop = Chain.build_chain("s", "goal", {"s": {"s": F(1, 2), "goal": F(1, 2)}}, {"s": 1})
    with pytest.raises(measures.CyclicModelError):
        measures.exact_distribution(loop)
    d = measures.truncated_distribution(loop, F(1, 1024))
    assert d.tail_mass <= F(1, 1024)
    with pytest.raises(measures.TailMassError):
        measures.deviation_report(d)


def test_bounds_mode_on_loop_model():
    p = F(1, 4)
    m = zoo.loop_mdp(p)
    eps = F(1, 2**40)
    for choice in ({"alpha": 1}, {"beta": 1}, {"alpha": F(1, 3), "beta": F(2, 3)}):
        b = measures.measure_bounds(m, policy(m, s_dec=choice), eps)
        assert b.tail_mass <= eps
        assert 2 * (1 - p) * b.expectation in b.mad
        assert b.smad.lo * 2 <= b.mad.hi and b.mad.lo <= 2 * b.smad.hi


def test_bounds_mode_exact_expectation():
    m = zoo.loop_mdp(F(1, 2))
    b = measures.measure_bounds(m, policy(m, s_dec={"alpha": 1}), F(1, 2**20))
    assert b.expectation == F(3, 2)


def test_counter_scheduler_distribution():
    m = zoo.gamble_mdp()
    cs = CounterScheduler(30, {("s_init", 0): "alpha", ("s0", 0): "tau", ("s1", 0): "tau", ("s2", 0): "tau"})
    d = measures.distribution_of(m, cs)
    assert d.atoms == ((0, F(1, 2)), (100, F(1, 2)))


def test_penalized_kinds():
    d = measures.distribution_from_mapping({0: F(1, 2), 100: F(1, 2)})
    assert measures.penalized(d, measures.PenaltySpec("vpe", F(1, 100))) == 50 - 25
    assert measures.penalized(d, measures.PenaltySpec("madpe", F(1, 2))) == 25
    assert measures.penalized(d, measures.PenaltySpec("smadpe", 1)) == 25
    assert measures.penalized(d, measures.PenaltySpec("svpe", F(1, 100))) == 50 - F(1250, 100)
    assert measures.penalized(d, measures.PenaltySpec("tbpe", 1, 30)) == 50 - 15
    with pytest.raises(ValueError):
        measures.PenaltySpec("madpe", 1, 3)


def test_threshold_shortfall():
    d = measures.distribution_from_mapping({0: F(1, 4), 3: F(3, 4)})
    assert measures.threshold_shortfall(d, 2) == F(1, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_smad_is_half_mad(seed):
    d = measures.distribution_from_mapping(zoo.random_distribution(random.Random(seed), rational_values=True))
    rep = measures.deviation_report(d)
    assert rep.smad == rep.mad / 2
    assert 0 <= rep.semivariance <= rep.variance


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_penalized_matches_oracle_objective(seed):
    rng = random.Random(seed)
    m = acyclic_models()[rng.choice(["randomization", "gamble", "random0", "random2"])]
    sched = random_reward_based(rng, m, 4)
    d = measures.distribution_of(m, sched)
    assert d == enumerate_paths(m, sched)
    for kind in ("vpe", "madpe", "smadpe", "svpe"):
        lam = F(rng.randint(0, 5), 4)
        assert measures.penalized(d, measures.PenaltySpec(kind, lam)) == oracle_objective(d, kind, lam)


def test_reward_based_scheduler_distribution():
    m = zoo.randomization_mdp()
    default = policy(m, s_init={"beta": 1})
    rb = RewardBasedRandomized({("s_init", 0): {"alpha": 1}}, default)
    assert measures.expectation(measures.distribution_of(m, rb)) == F(3, 4)
