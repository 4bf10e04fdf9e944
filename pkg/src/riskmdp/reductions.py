"""Executable hardness constructions: MAD gadgets, tail-probability recovery and the MAD binary search.

Given an acyclic chain with integer rewards and an integer t, two gadget chains
with expectations exactly t and t + 1/2 reveal sum_w p_w |w - t| and
sum_w p_w |w - t - 1/2| through their MADs, and the difference of those sums
is Pr(rew > t) - 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .measures import deviation_report, exact_distribution
from .model import Chain, Number, RewardDistribution
from .tbpe import expectation_of_penalty, make_penalty

HALF = Fraction(1, 2)
SPLIT_HALF = "t>=E"  # half to the chain, half to a padding state
SPLIT_SCALED = "t<E"  # t/E to the chain, the rest to a zero-reward exit


class ReductionError(ValueError):
    pass


def _as_chain(c) -> Chain:
    c = getattr(c, "mdp", c)
    return c if isinstance(c, Chain) else Chain.from_mdp(c)


def denominator_product(c: Chain) -> int:
    """Product of all transition-probability denominators (in lowest terms)."""
    return math.prod(p.denominator for succ in c.trans.values() for _, p in succ)


@dataclass(frozen=True)
class Gadget:
    """One chain with expectation ``target`` built around the original chain."""

    chain: Chain
    target: Fraction
    branch: str
    weight: Fraction  # probability of entering the original chain

    @property
    def expectation(self) -> Fraction:
        return deviation_report(exact_distribution(self.chain)).expectation


@dataclass(frozen=True)
class ReductionGadget:
    m1: Gadget
    m2: Gadget
    L: int
    K: Number
    E: Fraction
    t: int
    trace: dict = field(default_factory=dict, compare=False)

    @property
    def branch(self) -> str:
        return self.m1.branch


def _gadget(c: Chain, e: Fraction, target: Fraction) -> Gadget:
    root, pad = "s_new", "s_pad"
    states = set(c.states) | {root, pad}
    if {root, pad} & set(c.states):
        raise ReductionError("chain already uses the gadget state names")
    succ = {s: dict(c.succ(s)) for s in c.states if not c.is_trap(s)}
    reward = {s: c.state_reward(s) for s in c.states if not c.is_trap(s)}
    if target >= e:
        branch, weight = SPLIT_HALF, HALF
        succ[root] = {c.initial: HALF, pad: HALF}
        reward[pad] = 2 * target - e
    else:
        branch, weight = SPLIT_SCALED, target / e
        succ[root] = {c.initial: weight, pad: 1 - weight} if weight != 1 else {c.initial: Fraction(1)}
        reward[pad] = 0
    reward[root] = 0
    succ[pad] = {c.goal: Fraction(1)}
    if weight == 0:
        succ[root] = {pad: Fraction(1)}
    g = Gadget(Chain.build_chain(root, c.goal, succ, reward, states=states), target, branch, weight)
    if g.expectation != target:
        raise AssertionError(f"gadget expectation {g.expectation} != {target}")
    return g


def build_gadgets(c, t: int) -> ReductionGadget:
    c = _as_chain(c)
    if t < 0 or Fraction(t).denominator != 1:
        raise ReductionError("t must be a non-negative integer")
    d = exact_distribution(c)
    if any(Fraction(v).denominator != 1 for v, _ in d.atoms):
        raise ReductionError("the chain must have integer path rewards")
    e = deviation_report(d).expectation
    k = max(v for v, _ in d.atoms)
    t = int(t)
    m1 = _gadget(c, e, Fraction(t))
    m2 = _gadget(c, e, t + HALF)
    return ReductionGadget(m1, m2, denominator_product(c), k, e, t)


def _abs_sum(g: Gadget, mad: Fraction, e: Fraction) -> Fraction:
    """sum_w p_w |w - target| of the original chain, read off the gadget's MAD."""
    tau = g.target
    if g.branch == SPLIT_HALF:
        # MAD = 1/2 sum p |w - tau| + 1/2 (tau - E)
        return 2 * mad - (tau - e)
    if g.weight == 0:
        # tau = 0 < E: every w >= 0, so the sum is E itself
        return e
    q = g.weight
    # MAD = q sum p |w - tau| + (1 - q) tau
    return (mad - (1 - q) * tau) / q


def recover_tail_probability_mad(c, t: int, mad_of: Callable[[Chain], Fraction] | None = None) -> tuple[Fraction, dict]:
    """Pr(rew > t) from the MADs of the two gadgets; returns (probability, trace)."""
    mad_of = mad_of or (lambda ch: deviation_report(exact_distribution(ch)).mad)
    gad = build_gadgets(c, t)
    mad1, mad2 = mad_of(gad.m1.chain), mad_of(gad.m2.chain)
    a = _abs_sum(gad.m1, mad1, gad.E)
    b = _abs_sum(gad.m2, mad2, gad.E)
    prob = a - b + HALF
    trace = {
        "E": gad.E,
        "t": gad.t,
        "branch_m1": gad.m1.branch,
        "branch_m2": gad.m2.branch,
        "mad_m1": mad1,
        "mad_m2": mad2,
        "abs_sum_t": a,
        "abs_sum_t_half": b,
        "probability": prob,
    }
    return prob, trace


def recover_tail_probability_crinkle(c, t: int) -> Fraction:
    """Pr(rew >= t) as the difference of two crinkle expectations."""
    if t < 1:
        raise ReductionError("t must be at least 1")
    c = _as_chain(c)
    return expectation_of_penalty(c, make_penalty("crinkle2", t)) - expectation_of_penalty(
        c, make_penalty("crinkle2", t - 1)
    )


def tail_probability(d: RewardDistribution, t: Number, strict: bool = True) -> Fraction:
    return sum((p for v, p in d.atoms if (v > t if strict else v >= t)), Fraction(0))


def probability_granularity(d: RewardDistribution) -> int:
    """Least L such that every path-reward probability is a multiple of 1/L."""
    return math.lcm(*(p.denominator for _, p in d.atoms))


@dataclass
class SearchResult:
    mad: Fraction
    calls: int
    call_bound: int
    L: int
    K: Number
    queries: list[tuple[Fraction, bool]]
    L_product: int = 0


def binary_search_mad(c, threshold_oracle: Callable[[Fraction], bool]) -> SearchResult:
    """Exact MAD from answers to "MAD >= theta?", searching the multiples of 1/L^2 in [0, K].

    E and every outcome probability are multiples of 1/L, so MAD is a multiple
    of 1/L^2.  L is the lcm of the outcome probabilities' denominators, which
    divides the product of all transition denominators.  Each threshold is
    asked once and every answer only shrinks the interval, so the answers of
    a bisection can never contradict each other.
    """
    c = _as_chain(c)
    d = exact_distribution(c)
    L = probability_granularity(d)
    K = max(v for v, _ in d.atoms)
    scale = L * L
    lo, hi = 0, int(math.floor(K * scale))  # MAD >= lo / scale is known
    queries: list[tuple[Fraction, bool]] = []
    while lo < hi:
        mid = (lo + hi + 1) // 2
        theta = Fraction(mid, scale)
        ans = bool(threshold_oracle(theta))
        queries.append((theta, ans))
        if ans:
            lo = mid
        else:
            hi = mid - 1
    bound = math.ceil(math.log2(scale * K)) + 1 if scale * K > 1 else 1
    return SearchResult(Fraction(lo, scale), len(queries), bound, L, K, queries, denominator_product(c))


def exact_mad_oracle(c) -> Callable[[Fraction], bool]:
    mad = deviation_report(exact_distribution(_as_chain(c))).mad
    return lambda theta: mad >= theta
