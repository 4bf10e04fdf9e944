from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import zoo
from riskmdp.model import (
    Chain,
    CounterScheduler,
    DuplicateTransitionError,
    MemorylessRandomized,
    ModelError,
    ModelSyntaxError,
    NegativeRewardError,
    ProbabilitySumError,
    RewardBasedRandomized,
    SchedulerError,
    UnknownReferenceError,
    induce_chain,
    parse_model,
    parse_scheduler,
    serialize,
    serialize_scheduler,
    validate,
)

SMALL = """\
mdp
initial s
goal goal
state s
  action a reward 2
    -> goal 0.25
    -> t 3/4
  action b reward 0
    -> goal 1
state t
  action c reward 1   # comment
    -> goal 1
"""


def test_parse_small_model():
    m = parse_model(SMALL)
    assert m.initial == "s" and m.goal == "goal"
    assert m.enabled("s") == ("a", "b")
    assert dict(m.trans[("s", "a")]) == {"goal": F(1, 4), "t": F(3, 4)}
    assert m.reward[("s", "a")] == 2
    assert m.is_trap("goal") and not m.is_chain
    assert validate(m).ok


def test_decimal_probabilities_are_exact():
    m = parse_model(SMALL)
    assert isinstance(dict(m.trans[("s", "a")])["goal"], F)


def test_serialize_round_trip_on_zoo():
    for m in [zoo.randomization_mdp(), zoo.loop_mdp(), zoo.gamble_mdp(), zoo.scaling_family(3)]:
        assert parse_model(serialize(m)) == m


def test_chain_document():
    c = parse_model("chain\ninitial s\ngoal g\nstate s reward 3\n  -> g 1\n")
    assert isinstance(c, Chain)
    assert c.state_reward("s") == 3
    assert parse_model(serialize(c)) == c


@pytest.mark.parametrize(
    "text, exc, line",
    [
        ("mdp\ninitial s\nstate s\n  action a reward 1\n    -> s 1/2\n", ProbabilitySumError, 5),
        ("mdp\ninitial s\nstate s\n  action a reward -1\n    -> s 1\n", NegativeRewardError, 4),
        ("mdp\ninitial s\nstate s\n  action a reward 1\n    -> nowhere 1\n", UnknownReferenceError, 5),
        ("mdp\ninitial s\nstate s\n  action a reward 1\n  action a reward 1\n", DuplicateTransitionError, 5),
        ("mdp\ninitial s\nstate s\n  bogus\n", ModelSyntaxError, 4),
        ("graph\n", ModelSyntaxError, 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, exc, line):
    with pytest.raises(exc) as info:
        parse_model(text)
    assert info.value.line == line
    assert isinstance(info.value, ModelError)


def test_fractional_reward_rejected():
    with pytest.raises(ModelError):
        parse_model("mdp\ninitial s\nstate s\n  action a reward 1/2\n    -> s 1\n")


def test_validate_reports_violations_without_raising():
    m = zoo.randomization_mdp()
    broken = type(m)(m.states, m.initial, m.goal, {**m.trans, ("s0", "tau"): (("goal", F(1, 2)),)}, m.reward)
    rep = validate(broken)
    assert not rep.ok and "probability-sum" in rep.kinds()


def test_induce_chain_keeps_integer_rewards():
    m = zoo.randomization_mdp()
    half = MemorylessRandomized({"s_init": {"alpha": F(1, 2), "beta": F(1, 2)}, "s0": {"tau": 1}, "s1": {"tau": 1}, "s2": {"tau": 1}})
    c = induce_chain(m, half)
    assert dict(c.succ("s_init")) == {"s0": F(1, 8), "s1": F(3, 4), "s2": F(1, 8)}


def test_induce_chain_splits_when_rewards_differ():
    m = zoo.loop_mdp()
    sched = MemorylessRandomized({"s_init": {"tau": 1}, "s1": {"tau": 1}, "s_dec": {"alpha": F(1, 3), "beta": F(2, 3)}})
    c = induce_chain(m, sched)
    assert dict(c.succ("s_dec")) == {"s_dec/alpha": F(1, 3), "s_dec/beta": F(2, 3)}
    assert c.state_reward("s_dec/alpha") == 1


def test_scheduler_checks():
    m = zoo.randomization_mdp()
    with pytest.raises(SchedulerError):
        MemorylessRandomized({"s_init": {"gamma": 1}}).check(m)
    with pytest.raises(SchedulerError):
        MemorylessRandomized({"s_init": {"alpha": F(1, 2)}})


def test_scheduler_text_round_trip():
    default = MemorylessRandomized({"s_init": {"alpha": 1}, "s0": {"tau": 1}})
    rb = RewardBasedRandomized({("s_init", 0): {"alpha": F(1, 3), "beta": F(2, 3)}}, default)
    assert parse_scheduler(serialize_scheduler(rb)) == rb
    assert parse_scheduler(serialize_scheduler(default)) == default
    cs = CounterScheduler(F(3, 2), {("s", 0): "a", ("s", 1): "b", ("s", 2): "a"})
    back = parse_scheduler(serialize_scheduler(cs))
    assert isinstance(back, CounterScheduler) and back.choice == cs.choice and back.threshold == F(3, 2)


def test_counter_scheduler_memory_clamps():
    cs = CounterScheduler(2, {("s", 0): "a"})
    assert cs.cap == 2
    assert cs.update("s", "a", "t", 0, 1) == 1
    assert cs.update("s", "a", "t", 1, 5) == 2


def test_reward_based_bound_follows_table():
    default = MemorylessRandomized({"s": {"a": 1}})
    rb = RewardBasedRandomized({("s", 4): {"a": 1}}, default)
    assert rb.bound == 4
    assert rb.stationary(5, None) is default and rb.stationary(4, None) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.integers(1, 3))
def test_random_models_round_trip(seed, n, acts):
    m = zoo.random_acyclic_mdp(seed, n_states=n, max_actions=acts)
    assert validate(m).ok
    assert parse_model(serialize(m)) == m
