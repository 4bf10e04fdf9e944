"""Shared fixtures for the test suite: random schedulers, LPs and the test-model catalogue."""
from __future__ import annotations

import random
from fractions import Fraction

from riskmdp import zoo
from riskmdp.lp import LpProblem
from riskmdp.model import Mdp, MemorylessRandomized, RewardBasedRandomized
from riskmdp.oracle import reachable_pairs
from riskmdp.preprocess import normalize

F = Fraction


def random_dist(rng: random.Random, actions, denominators=(1, 2, 3, 4, 5, 7)) -> dict[str, Fraction]:
    if len(actions) == 1:
        return {actions[0]: F(1)}
    den = rng.choice(denominators)
    weights = [rng.randint(0, den) for _ in actions]
    if sum(weights) == 0:
        weights[rng.randrange(len(actions))] = 1
    total = sum(weights)
    return {a: F(w, total) for a, w in zip(actions, weights) if w}


def random_memoryless(rng: random.Random, m: Mdp) -> MemorylessRandomized:
    return MemorylessRandomized({s: random_dist(rng, m.enabled(s)) for s in m.states if not m.is_trap(s)})


def random_reward_based(rng: random.Random, m: Mdp, bound: int) -> RewardBasedRandomized:
    """Random choices at every reachable decision pair with reward <= bound."""
    table = {}
    for s, w in reachable_pairs(m, bound):
        if w <= bound and len(m.enabled(s)) > 1:
            table[(s, w)] = random_dist(rng, m.enabled(s))
    return RewardBasedRandomized(table, random_memoryless(rng, m), bound)


def acyclic_models() -> dict[str, Mdp]:
    """Normalized acyclic test models."""
    out = {"randomization": zoo.randomization_mdp(), "gamble": zoo.gamble_mdp()}
    for seed in range(5):
        out[f"random{seed}"] = zoo.random_acyclic_mdp(seed, n_states=rng_size(seed), max_actions=3)
    return {k: normalize(m).mdp for k, m in out.items()}


def rng_size(seed: int) -> int:
    return 6 + (seed * 5) % 7  # 6..12 states


def cyclic_models() -> dict[str, Mdp]:
    return {
        "loop": normalize(zoo.loop_mdp(F(1, 4))).mdp,
        "heavy_loop": normalize(zoo.heavy_loop_mdp(5)).mdp,
        "ladder": normalize(zoo.scaling_family(4)).mdp,
    }


def random_chains(count: int, seed0: int = 0) -> list:
    return [zoo.random_acyclic_chain(seed0 + i, n_states=3 + i % 5, max_reward=4) for i in range(count)]


def random_lp(rng: random.Random) -> LpProblem:
    """A bounded LP in 2..4 variables with integer data; may be infeasible."""
    p = LpProblem()
    n = rng.randint(2, 4)
    names = [p.add_variable(f"x{i}", 0, rng.randint(1, 6)) for i in range(n)]
    for j in range(rng.randint(1, 4)):
        coeffs = {v: rng.randint(-3, 4) for v in names}
        rel = rng.choice(["<=", "<=", ">=", "="])
        p.add_constraint(coeffs, rel, rng.randint(-2, 8), f"r{j}")
    p.set_objective({v: rng.randint(-4, 5) for v in names})
    return p
