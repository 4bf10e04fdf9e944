import io
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import madpe, measures, zoo
from riskmdp.preprocess import normalize

from support import acyclic_models, random_reward_based

LAM = F(2, 5)


def madpe_in_m(m, sched, lam):
    return measures.penalized(measures.distribution_of(m, sched), measures.PenaltySpec("madpe", lam))


def test_check_lambda():
    assert madpe.check_lambda("1/2") == F(1, 2)
    for bad in (0, F(3, 5), 1, -1):
        with pytest.raises(madpe.MadpeRefusal):
            madpe.check_lambda(bad)


def test_unfolding_shape():
    n = madpe.build_unfolding_n(zoo.randomization_mdp())
    assert (n.k, n.ell) == (2, 2)
    assert len(n.mdp.states) == 5 * 4 + 1
    assert n.terminal("goal", 0) and n.terminal("s1", 2) and not n.terminal("s1", 1)
    assert n.terminal_reward("s1", 2) == 3 and n.terminal_reward("goal", 1) == 1


def test_qp_export_round_trip():
    q = madpe.build_qp(madpe.build_unfolding_n(zoo.gamble_mdp()), LAM)
    sink = io.StringIO()
    text = madpe.export_qp(q, sink)
    assert sink.getvalue() == text
    assert madpe.parse_qp(text) == q
    assert text.startswith("\\ riskmdp qp v1  lambda=2/5")


@pytest.mark.parametrize(
    "model, value",
    [
        (zoo.randomization_mdp(), F(11, 10)),
        (zoo.gamble_mdp(), F(40)),
        (zoo.loop_mdp(F(1, 4)), F(3, 10)),
        (zoo.heavy_loop_mdp(5), F(33, 10)),
    ],
)
def test_sweep_values(model, value):
    sol = madpe.solve_madpe_sweep(model, LAM)
    assert sol.value == value
    assert 0 <= sol.gap_bound
    assert madpe.madpe_from_frequencies(madpe.build_unfolding_n(model), sol.frequencies, LAM)[2] == value


def test_sweep_scheduler_achieves_value_in_m():
    m = zoo.randomization_mdp()
    sol = madpe.solve_madpe_sweep(m, LAM)
    assert madpe_in_m(m, sol.scheduler, LAM) == sol.value
    assert (sol.e_star, sol.mad) == (F(5, 4), F(3, 8))


def test_sweep_parallel_matches_serial():
    m = normalize(zoo.random_acyclic_mdp(8, n_states=5, max_actions=2, max_reward=2)).mdp
    a = madpe.solve_madpe_sweep(m, LAM)
    b = madpe.solve_madpe_sweep(m, LAM, madpe.SweepConfig(jobs=2))
    assert (a.value, a.e_star, a.sweep_log) == (b.value, b.e_star, b.sweep_log)


def test_sweep_refuses_large_lambda():
    with pytest.raises(madpe.MadpeRefusal):
        madpe.solve_madpe_sweep(zoo.loop_mdp(), F(3, 5))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_frequencies_satisfy_flow_constraints(seed):
    rng = random.Random(seed)
    m = acyclic_models()[rng.choice(["randomization", "gamble", "random1", "random3"])]
    n = madpe.build_unfolding_n(m)
    sched = madpe.upgrade(random_reward_based(rng, m, n.k), n)
    x = madpe.frequencies(n, sched)
    lp = madpe.build_frequency_constraints(n)
    assert lp.is_feasible(x)
    assert madpe.madpe_in_n(n, sched, LAM) == madpe_in_m(m, sched, LAM)
    rebuilt = madpe.extract_scheduler(n, x)
    assert madpe.frequencies(n, rebuilt) == x


def test_upgrade_keeps_choices_below_k():
    m = zoo.randomization_mdp()
    n = madpe.build_unfolding_n(m)
    sched = random_reward_based(random.Random(1), m, 3)
    up = madpe.upgrade(sched, n)
    assert up.decide("s_init", 0) == sched.decide("s_init", 0)
    assert up.decide("s_init", n.k) == {n.policy["s_init"]: 1}
