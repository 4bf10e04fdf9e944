import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import expect, zoo
from riskmdp.model import Mdp, MemorylessRandomized, induce_chain
from riskmdp.preprocess import (
    InfiniteExpectationError,
    check_finite_expectation,
    mec_decomposition,
    normalize,
    satisfies_assumption,
    zero_value_states,
)

from support import acyclic_models, cyclic_models, random_memoryless


def zero_loop_model() -> Mdp:
    """A zero-reward end component {u, v} reachable from s, plus a rewarded exit."""
    return Mdp.build(
        [],
        "s",
        "goal",
        {
            "s": {"go": (1, {"u": 1}), "stop": (0, {"goal": 1})},
            "u": {"stay": (0, {"v": 1}), "out": (2, {"goal": 1})},
            "v": {"back": (0, {"u": 1})},
            "dead": {"x": (0, {"dead2": 1})},
        },
    )


def test_normalize_is_identity_on_normalized_models():
    m = zoo.randomization_mdp()
    assert satisfies_assumption(m)
    assert normalize(m).mdp is m


def test_zero_end_component_is_collapsed():
    m = zero_loop_model()
    ecs = mec_decomposition(m)
    assert {frozenset(ec.states) for ec in ecs} == {frozenset({"u", "v"})}
    nm = normalize(m)
    assert satisfies_assumption(nm.mdp)
    assert nm.provenance["ec#0"] == frozenset({"u", "v"})
    assert expect.max_expected_reward(nm).values[nm.mdp.initial] == 3
    assert expect.min_expected_reward(nm).values[nm.mdp.initial] == 0


def test_zero_value_states_merge_into_goal():
    m = zero_loop_model()
    assert "dead" in zero_value_states(m)


def test_positive_end_component_rejected():
    m = Mdp.build([], "s", "goal", {"s": {"loop": (1, {"s": 1}), "stop": (0, {"goal": 1})}})
    assert not check_finite_expectation(m)
    with pytest.raises(InfiniteExpectationError):
        normalize(m)


def test_randomization_model_values():
    m = zoo.randomization_mdp()
    mx, mn = expect.max_expected_reward(m), expect.min_expected_reward(m)
    assert mx.values["s_init"] == F(5, 4) and mx.policy["s_init"] == "beta"
    assert mn.values["s_init"] == F(3, 4) and mn.policy["s_init"] == "alpha"


def test_loop_model_values():
    p = F(1, 4)
    m = zoo.loop_mdp(p)
    # the loop yields a geometric number of +1 steps with mean 2, then alpha adds 1
    assert expect.max_expected_reward(m).values["s_init"] == 3 * p
    assert expect.min_expected_reward(m).values["s_init"] == 2 * p


def test_policy_iteration_matches_enumeration_of_policies():
    for m in list(acyclic_models().values())[:4]:
        best = max(expect.evaluate_policy(m, pol)[m.initial] for pol in expect.iter_policies(m))
        assert expect.max_expected_reward(m).values[m.initial] == best


def test_value_iteration_agrees_with_policy_iteration():
    for m in [*acyclic_models().values(), *cyclic_models().values()]:
        for direction in (expect.MAX, expect.MIN):
            exact = expect.policy_iteration(m, direction)
            approx = expect.value_iteration(m, direction, 1e-12)
            assert all(abs(float(exact.values[s]) - approx.values[s]) <= 1e-10 for s in m.states)


def test_bellman_residual_vanishes_at_optimum():
    m = normalize(zoo.scaling_family(3)).mdp
    table = expect.max_expected_reward(m)
    assert all(r == 0 for r in expect.bellman_residual(m, table).values())


def test_solve_affine_handles_self_loops():
    vals = expect.solve_affine({"x": (F(2), [("x", F(1, 2)), ("y", F(1, 2))]), "y": (F(1), [])})
    assert vals == {"x": F(5), "y": F(1)}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5000))
def test_scheduler_value_between_min_and_max(seed):
    m = normalize(zoo.random_acyclic_mdp(seed, n_states=6, max_actions=3)).mdp
    sched = random_memoryless(random.Random(seed), m)
    v = expect.scheduler_value(m, sched)
    assert expect.min_expected_reward(m).values[m.initial] <= v <= expect.max_expected_reward(m).values[m.initial]


def test_visit_frequencies_of_geometric_loop():
    c = normalize(zoo.loop_mdp(1)).mdp
    sched = MemorylessRandomized({s: {c.enabled(s)[0]: 1} for s in c.states if not c.is_trap(s)})
    chain = induce_chain(c, sched)
    assert expect.visit_frequencies(chain)["s1"] == 2
