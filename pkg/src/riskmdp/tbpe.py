"""Threshold-based penalties: penalty functions, the capped reward-counter unfolding M' and its solver.

A penalty m is any function with m(x) = x + c for all x >= t (c = 0 for the
threshold penalty, c = t for crinkle).  Tracking the accumulated reward up to
the cap ceil(t) turns E(m(rew)) into an ordinary expected total reward on M'
with (possibly negative, rational) rewards m(w + r) - m(w).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .expect import MAX, ValueTable, evaluate_policy, max_expected_reward, value_iteration
from .model import CHAIN_ACTION, CounterScheduler, Mdp, Number, fmt
from .preprocess import NormalizedMdp, normalize

INIT_PRIME = "init'"
PENALTY_KINDS = ("tbp", "crinkle2", "custom")


class PenaltyError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyFunction:
    kind: str
    t: Fraction
    lam: Fraction | None = None
    breakpoints: tuple[tuple[Fraction, Fraction], ...] = ()

    @property
    def cap(self) -> int:
        return math.ceil(self.t)

    @property
    def shift(self) -> Fraction:
        """m(x) - x for x >= t."""
        return self.t if self.kind == "crinkle2" else Fraction(0)

    def __call__(self, x: Number) -> Fraction:
        x = Fraction(x)
        if self.kind == "tbp":
            return x - self.lam * max(self.t - x, Fraction(0))
        if self.kind == "crinkle2":
            return 2 * x if x < self.t else x + self.t
        if x >= self.t:
            return x
        pts = self.breakpoints
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x0 <= x <= x1:
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        raise PenaltyError(f"custom penalty undefined at {fmt(x)}")

    def describe(self) -> str:
        if self.kind == "tbp":
            return f"tbp(lambda={fmt(self.lam)}, t={fmt(self.t)})"
        if self.kind == "crinkle2":
            return f"crinkle2(t={fmt(self.t)})"
        return f"custom(t={fmt(self.t)}, {len(self.breakpoints)} breakpoints)"


def make_penalty(
    kind: str,
    t: Number,
    lam: Number | None = None,
    breakpoints: Sequence[tuple[Number, Number]] | None = None,
) -> PenaltyFunction:
    t = Fraction(t)
    if t < 0:
        raise PenaltyError("threshold must be non-negative")
    if kind == "tbp":
        if lam is None or Fraction(lam) <= 0:
            raise PenaltyError("tbp needs lambda > 0")
        return PenaltyFunction("tbp", t, Fraction(lam))
    if kind == "crinkle2":
        return PenaltyFunction("crinkle2", t)
    if kind != "custom":
        raise PenaltyError(f"unknown penalty kind {kind!r}; expected one of {PENALTY_KINDS}")
    pts = [(Fraction(x), Fraction(y)) for x, y in (breakpoints or ())]
    xs = [x for x, _ in pts]
    if xs != sorted(set(xs)):
        raise PenaltyError("breakpoints must be strictly increasing")
    for x, y in pts:
        if x >= t and y != x:
            raise PenaltyError(f"custom penalty must satisfy m(x) = x for x >= t; m({fmt(x)}) = {fmt(y)}")
    if t > 0:
        if not pts or pts[0][0] != 0:
            raise PenaltyError("custom breakpoints must start at 0")
        if pts[-1][0] < t:
            pts.append((t, t))
    return PenaltyFunction("custom", t, None, tuple(pts))


def parse_breakpoints(text: str) -> list[tuple[Fraction, Fraction]]:
    """Lines ``<x> <m(x)>``; ``#`` starts a comment."""
    from .model import parse_rational

    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) != 2:
            raise PenaltyError(f"line {lineno}: expected '<x> <value>'")
        out.append((parse_rational(line[0]), parse_rational(line[1])))
    return out


# ---------------------------------------------------------------------------
# Unfolding


@dataclass(frozen=True, eq=False)
class UnfoldedT:
    mdp: Mdp
    base: Mdp
    penalty: PenaltyFunction
    pair_of: Mapping[str, tuple[str, int]]
    node_of: Mapping[tuple[str, int], str] = field(repr=False)


def _node(s: str, w: int) -> str:
    return f"{s}@{w}"


def build_unfolding_t(m, pen: PenaltyFunction) -> UnfoldedT:
    """M' over S x {0..ceil(t)} plus ``init'``; the counter sticks at ceil(t) once the total reaches t."""
    base = m.mdp if isinstance(m, NormalizedMdp) else m
    cap = pen.cap
    node_of = {(s, w): _node(s, w) for s in base.states for w in range(cap + 1)}
    pair_of = {v: p for p, v in node_of.items()}
    mval = {w: pen(w) for w in range(cap + 1)}
    actions: dict[str, dict] = {}
    for (s, w), name in node_of.items():
        if base.is_trap(s):
            continue
        acts = {}
        for a in base.enabled(s):
            r = base.reward[(s, a)]
            total = w + r
            if w == cap:
                rew = Fraction(r)
                v = cap
            else:
                rew = pen(total) - mval[w]
                v = cap if total >= pen.t else total
            acts[a] = (rew, {node_of[(t, v)]: p for t, p in base.trans[(s, a)]})
        actions[name] = acts
    actions[INIT_PRIME] = {CHAIN_ACTION: (mval[0], {node_of[(base.initial, 0)]: Fraction(1)})}
    goal = node_of[(base.goal, cap)] if base.goal is not None else None
    states = set(node_of.values()) | {INIT_PRIME}
    mp = Mdp.build(states, INIT_PRIME, goal, actions)
    return UnfoldedT(mp, base, pen, pair_of, node_of)


@dataclass(frozen=True)
class TbpeSolution:
    value: Fraction | float
    scheduler: CounterScheduler
    values: Mapping[tuple[str, int], Fraction | float]
    unfolding: UnfoldedT
    exact: bool = True


def solve_tbpe(m, pen: PenaltyFunction, exact: bool = True, tolerance: float = 1e-10) -> TbpeSolution:
    """E^max(m(rew)) with an optimal counter-based deterministic scheduler."""
    nm = normalize(m)
    u = build_unfolding_t(nm, pen)
    table: ValueTable = max_expected_reward(u.mdp) if exact else value_iteration(u.mdp, MAX, tolerance)
    choice = {u.pair_of[name]: a for name, a in table.policy.items() if name != INIT_PRIME}
    sched = CounterScheduler(pen.t, choice)
    values = {u.pair_of[name]: v for name, v in table.values.items() if name != INIT_PRIME}
    return TbpeSolution(table.values[INIT_PRIME], sched, values, u, exact)


def expectation_of_penalty(c, pen: PenaltyFunction) -> Fraction:
    """E(m(rew)) on a chain, by evaluating its unfolding (nothing to maximize)."""
    u = build_unfolding_t(normalize(c), pen)
    policy = {s: u.mdp.enabled(s)[0] for s in u.mdp.states if not u.mdp.is_trap(s)}
    return evaluate_policy(u.mdp, policy)[INIT_PRIME]
