"""Worked-example models and seeded random model families."""
from __future__ import annotations

import random
from fractions import Fraction

from .model import Chain, Mdp, Number

F = Fraction


def randomization_mdp() -> Mdp:
    """alpha/beta at s_init lead to exits worth 0, 1 or 2; mixing them lowers the MAD."""
    return Mdp.build(
        [],
        "s_init",
        "goal",
        {
            "s_init": {
                "alpha": (0, {"s0": F(1, 4), "s1": F(3, 4)}),
                "beta": (0, {"s2": F(1, 4), "s1": F(3, 4)}),
            },
            "s0": {"tau": (0, {"goal": 1})},
            "s1": {"tau": (1, {"goal": 1})},
            "s2": {"tau": (2, {"goal": 1})},
        },
    )


def loop_mdp(p: Number = F(1, 4)) -> Mdp:
    """Geometric loop: a +1 self-loop at s1 left w.p. 1/2 towards s_dec; alpha (+1) or beta (+0) at s_dec."""
    p = F(p)
    init = {"s1": p} if p == 1 else {"goal": 1 - p, "s1": p}
    return Mdp.build(
        [],
        "s_init",
        "goal",
        {
            "s_init": {"tau": (0, init)},
            "s1": {"tau": (1, {"s1": F(1, 2), "s_dec": F(1, 2)})},
            "s_dec": {"alpha": (1, {"goal": 1}), "beta": (0, {"goal": 1})},
        },
    )


def heavy_loop_mdp(k: int = 101) -> Mdp:
    """The loop model with p = 1/2 and reward k per loop iteration."""
    return Mdp.build(
        [],
        "s_init",
        "goal",
        {
            "s_init": {"tau": (0, {"goal": F(1, 2), "s1": F(1, 2)})},
            "s1": {"tau": (k, {"s1": F(1, 2), "s_dec": F(1, 2)})},
            "s_dec": {"alpha": (1, {"goal": 1}), "beta": (0, {"goal": 1})},
        },
    )


def gamble_mdp() -> Mdp:
    """alpha gives 0 or 100 evenly, beta a sure 40."""
    return Mdp.build(
        [],
        "s_init",
        "goal",
        {
            "s_init": {
                "alpha": (0, {"s0": F(1, 2), "s1": F(1, 2)}),
                "beta": (0, {"s2": 1}),
            },
            "s0": {"tau": (0, {"goal": 1})},
            "s1": {"tau": (100, {"goal": 1})},
            "s2": {"tau": (40, {"goal": 1})},
        },
    )


def trap_only() -> Mdp:
    return Mdp.build([], "goal", "goal", {})


def single_step(reward: int = 1) -> Mdp:
    return Mdp.build([], "s", "goal", {"s": {"tau": (reward, {"goal": 1})}})


def point_chain(value: int) -> Chain:
    if value == 0:
        return Chain.build_chain("goal", "goal", {})
    return Chain.build_chain("s", "goal", {"s": {"goal": 1}}, {"s": value})


def distribution_chain(dist: dict[int, Number]) -> Chain:
    """Chain that jumps from s_init to one exit state per reward value."""
    succ = {"s_init": {f"r{v}": F(p) for v, p in dist.items()}}
    reward = {}
    for v in dist:
        succ[f"r{v}"] = {"goal": 1}
        reward[f"r{v}"] = v
    return Chain.build_chain("s_init", "goal", succ, reward)


def _random_dist(rng: random.Random, targets: list[str], denominators=(2, 3, 4, 5, 6, 8)) -> dict[str, Fraction]:
    k = rng.randint(1, min(3, len(targets)))
    picks = rng.sample(targets, k)
    den = rng.choice(denominators)
    if k > den:
        k = den
        picks = picks[:k]
    cuts = sorted(rng.sample(range(1, den), k - 1)) if k > 1 else []
    bounds = [0, *cuts, den]
    return {t: F(bounds[i + 1] - bounds[i], den) for i, t in enumerate(picks)}


def random_acyclic_mdp(
    seed: int,
    n_states: int = 6,
    max_actions: int = 2,
    max_reward: int = 3,
    decision_prob: float = 0.5,
) -> Mdp:
    """Layered random DAG ending in ``goal``; states ``q0`` (initial) .. ``q{n-1}``."""
    rng = random.Random(seed)
    names = [f"q{i}" for i in range(n_states)]
    actions = {}
    for i, s in enumerate(names):
        later = names[i + 1 :] + ["goal"]
        n_act = rng.randint(2, max_actions) if max_actions > 1 and rng.random() < decision_prob else 1
        acts = {}
        for j in range(n_act):
            acts[f"a{j}"] = (rng.randint(0, max_reward), _random_dist(rng, later))
        actions[s] = acts
    if all(r == 0 for acts in actions.values() for r, _ in acts.values()):
        r, d = actions[names[-1]]["a0"]
        actions[names[-1]]["a0"] = (1, d)
    return Mdp.build([], names[0], "goal", actions)


def random_acyclic_chain(seed: int, n_states: int = 6, max_reward: int = 4) -> Chain:
    m = random_acyclic_mdp(seed, n_states=n_states, max_actions=1, max_reward=max_reward)
    return Chain.from_mdp(m)


def random_distribution(rng: random.Random, max_atoms: int = 6, max_value: int = 20, rational_values: bool = False):
    n = rng.randint(1, max_atoms)
    values = rng.sample(range(max_value + 1), min(n, max_value + 1))
    weights = [rng.randint(1, 12) for _ in values]
    total = sum(weights)
    if rational_values:
        values = [F(v, rng.randint(1, 4)) for v in values]
    out: dict = {}
    for v, w in zip(values, weights):
        out[v] = out.get(v, F(0)) + F(w, total)
    return out


def scaling_family(n_stages: int, t_hint: int = 0) -> Mdp:
    """Ladder of ``n_stages`` decision states.

    Stage ``i`` offers ``safe`` (+1, advance) or ``gamble`` (+0 or +3 evenly,
    advance); a reward-1 self-loop ``wait`` with exit probability 1/2 keeps the
    model cyclic without creating end components.
    """
    actions = {}
    for i in range(n_stages):
        s, nxt = f"c{i}", (f"c{i + 1}" if i + 1 < n_stages else "goal")
        w = f"w{i}"
        actions[s] = {
            "safe": (1, {nxt: 1}),
            "gamble": (0, {w: F(1, 2), f"h{i}": F(1, 2)}),
        }
        actions[w] = {"wait": (1, {w: F(1, 2), nxt: F(1, 2)})}
        actions[f"h{i}"] = {"tau": (3, {nxt: 1})}
    return Mdp.build([], "c0", "goal", actions)
