from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp import measures, oracle, reductions, zoo
from riskmdp.model import MemorylessRandomized

from support import random_chains


def beta(m):
    return MemorylessRandomized({s: {m.enabled(s)[-1]: 1} for s in m.states if not m.is_trap(s)})


def test_enumerate_paths_budget():
    m = zoo.scaling_family(12)
    pol = MemorylessRandomized({s: {m.enabled(s)[0]: 1} for s in m.states if not m.is_trap(s)})
    with pytest.raises(oracle.OracleBudgetError):
        oracle.enumerate_paths(m, pol, max_paths=10, max_len=5)


def test_grid_small_randomization():
    m = zoo.randomization_mdp()
    res = oracle.grid_search(m, oracle.GridSpec(2, "madpe", 4))
    assert res.value == 0 and res.probabilities == ((F(1, 2), F(1, 2)),)
    assert res.mode == "exact" and res.points == 3


def test_grid_float_mode_agrees_with_exact():
    m = zoo.gamble_mdp()
    exact = oracle.grid_search(m, oracle.GridSpec(300, "svpe", F(1, 100)))
    fast = oracle.grid_search(m, oracle.GridSpec(300, "svpe", F(1, 100), exact_limit=10))
    assert (exact.mode, fast.mode) == ("exact", "float+exact")
    assert exact.value == fast.value and exact.probabilities == fast.probabilities


def test_grid_budget():
    with pytest.raises(oracle.OracleBudgetError):
        oracle.grid_search(zoo.gamble_mdp(), oracle.GridSpec(1000, "vpe", 1, budget=10))


def test_simulation_is_reproducible():
    m = zoo.randomization_mdp()
    a = oracle.simulate(m, beta(m), 5000, seed=7)
    b = oracle.simulate(m, beta(m), 5000, seed=7, batch_size=1 << 16)
    c = oracle.simulate(m, beta(m), 5000, seed=8)
    assert a.to_json() == b.to_json()
    assert a.mean != c.mean
    assert abs(sum(a.histogram.values()) - 1) < 1e-12


def test_simulation_parallel_batches_match_serial():
    m = zoo.gamble_mdp()
    a = oracle.simulate(m, beta(m), 3000, seed=1, batch_size=1000)
    b = oracle.simulate(m, beta(m), 3000, seed=1, batch_size=1000, jobs=2)
    assert a.to_json() == b.to_json()


def test_simulation_edge_cases():
    m = zoo.randomization_mdp()
    assert oracle.simulate(m, beta(m), 0).n == 0
    with pytest.raises(ValueError):
        oracle.simulate(m, beta(m), -1)


def test_total_variation_small_for_large_samples():
    m = zoo.loop_mdp(F(1, 2))
    rep = oracle.simulate(m, beta(m), 50_000, seed=3)
    d = measures.distribution_of(m, beta(m), F(1, 2**30))
    assert oracle.total_variation(rep.histogram, d) < 0.02
    assert np.isfinite(rep.se_mean)


def test_reductions_worked_examples():
    c = zoo.distribution_chain({1: F(3, 4), 2: F(1, 4)})
    g = reductions.build_gadgets(c, 2)
    assert g.m1.branch == reductions.SPLIT_HALF and g.m1.chain.state_reward("s_pad") == F(11, 4)
    g1 = reductions.build_gadgets(c, 1)
    assert g1.m1.branch == reductions.SPLIT_SCALED and g1.m1.weight == F(4, 5)
    assert reductions.recover_tail_probability_mad(c, 1)[0] == F(1, 4)
    assert reductions.recover_tail_probability_mad(c, 2)[0] == 0
    assert reductions.recover_tail_probability_crinkle(c, 2) == F(1, 4)
    assert reductions.recover_tail_probability_crinkle(c, 1) == 1
    res = reductions.binary_search_mad(c, reductions.exact_mad_oracle(c))
    assert (res.mad, res.L, res.K, res.call_bound) == (F(3, 8), 4, 2, 6)
    assert res.calls <= 6


def test_reductions_point_masses():
    zero = zoo.point_chain(0)
    assert reductions.build_gadgets(zero, 0).m1.branch == reductions.SPLIT_HALF
    assert reductions.recover_tail_probability_crinkle(zero, 1) == 0
    assert reductions.binary_search_mad(zero, reductions.exact_mad_oracle(zero)).mad == 0
    five = zoo.point_chain(5)
    assert reductions.recover_tail_probability_mad(five, 3)[0] == 1
    sym = zoo.distribution_chain({0: F(1, 2), 2: F(1, 2)})
    assert reductions.binary_search_mad(sym, reductions.exact_mad_oracle(sym)).mad == 1


def test_reduction_errors():
    c = zoo.distribution_chain({1: F(1)})
    with pytest.raises(reductions.ReductionError):
        reductions.build_gadgets(c, -1)
    with pytest.raises(reductions.ReductionError):
        reductions.recover_tail_probability_crinkle(c, 0)
    with pytest.raises(reductions.ReductionError):
        reductions.build_gadgets(c, F(1, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**5))
def test_recovery_matches_exact_tails(seed):
    c = zoo.random_acyclic_chain(seed, n_states=4, max_reward=3)
    d = measures.exact_distribution(c)
    k = max(v for v, _ in d.atoms)
    for t in range(0, k + 2):
        tail = reductions.tail_probability(d, t)
        assert reductions.recover_tail_probability_mad(c, t)[0] == tail
        assert reductions.recover_tail_probability_crinkle(c, t + 1) == tail


def test_binary_search_over_random_chains():
    for c in random_chains(10, seed0=100):
        res = reductions.binary_search_mad(c, reductions.exact_mad_oracle(c))
        assert res.mad == measures.deviation_report(measures.exact_distribution(c)).mad
        assert res.calls <= res.call_bound
        assert (res.mad * res.L**2).denominator == 1
        assert res.L_product % res.L == 0
