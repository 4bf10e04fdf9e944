"""Reward distributions of chains and scheduled MDPs, deviation measures and penalized expectations."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .expect import second_moments
from .model import (
    CHAIN_ACTION,
    Chain,
    MemorylessRandomized,
    Mdp,
    Number,
    RewardDistribution,
    Scheduler,
    induce_chain,
    normalize_reward,
)

KINDS = ("vpe", "madpe", "smadpe", "svpe", "tbpe")


class CyclicModelError(ValueError):
    """Exact enumeration was requested on a cyclic model; use a tail bound instead."""


class TailMassError(ValueError):
    """An exact measure was requested on a truncated distribution."""


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class MeasureReport:
    expectation: Fraction
    variance: Fraction
    mad: Fraction
    smad: Fraction
    semivariance: Fraction

    def as_dict(self) -> dict[str, Fraction]:
        return {
            "E": self.expectation,
            "V": self.variance,
            "MAD": self.mad,
            "SMAD": self.smad,
            "SV": self.semivariance,
        }


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    lam: Fraction
    t: Fraction | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "lam", Fraction(self.lam))
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.kind == "tbpe":
            if self.t is None:
                raise ValueError("tbpe needs a threshold t")
            object.__setattr__(self, "t", Fraction(self.t))
        elif self.t is not None:
            raise ValueError(f"threshold only applies to tbpe, not {self.kind}")


# ---------------------------------------------------------------------------
# Distributions


class _ChainScheduler(Scheduler):
    def decide(self, state, reward, memory):
        return {CHAIN_ACTION: Fraction(1)}

    def stationary(self, reward, memory):
        return None


def _reachable_topo(c: Mdp) -> list[str] | None:
    reach = c.reachable()
    indeg = {s: 0 for s in reach}
    for s in reach:
        for a in c.enabled(s):
            for t, _ in c.trans[(s, a)]:
                indeg[t] += 1
    ready = [s for s, d in indeg.items() if d == 0]
    order = []
    while ready:
        s = ready.pop()
        order.append(s)
        for a in c.enabled(s):
            for t, _ in c.trans[(s, a)]:
                indeg[t] -= 1
                if indeg[t] == 0:
                    ready.append(t)
    return order if len(order) == len(reach) else None


def exact_distribution(c: Chain) -> RewardDistribution:
    """Exact law of the total reward of an acyclic chain, by forward DP in topological order."""
    c = getattr(c, "mdp", c)
    order = _reachable_topo(c)
    if order is None:
        raise CyclicModelError("chain is cyclic; use truncated_distribution with a tail bound")
    mass: dict[str, dict[Number, Fraction]] = {c.initial: {0: Fraction(1)}}
    out: dict[Number, Fraction] = {}
    for s in order:
        here = mass.pop(s, None)
        if not here:
            continue
        if c.is_trap(s):
            for v, p in here.items():
                out[v] = out.get(v, Fraction(0)) + p
            continue
        (a,) = c.enabled(s)
        r = c.reward[(s, a)]
        for t, q in c.trans[(s, a)]:
            tgt = mass.setdefault(t, {})
            for v, p in here.items():
                key = v + r
                tgt[key] = tgt.get(key, Fraction(0)) + p * q
    return RewardDistribution.from_mapping(out)


def _unroll(m: Mdp, sched: Scheduler, epsilon: Fraction | None, max_steps: int, until_stationary: bool = False):
    """Step-wise unrolling over (state, accumulated reward, memory).

    Returns (absorbed mass per reward, frontier).  Stops when the frontier is
    empty or, with ``epsilon``, once its mass is at most ``epsilon`` (and, with
    ``until_stationary``, every frontier item has a stationary continuation).
    """
    absorbed: dict[Number, Fraction] = {}
    frontier: dict[tuple, Fraction] = {(m.initial, 0, sched.initial_memory): Fraction(1)}
    for _step in range(max_steps):
        done_now = {}
        for key, p in list(frontier.items()):
            if m.is_trap(key[0]):
                v = key[1]
                absorbed[v] = absorbed.get(v, Fraction(0)) + p
                del frontier[key]
        del done_now
        if not frontier:
            return absorbed, frontier
        if epsilon is not None and sum(frontier.values()) <= epsilon:
            if not until_stationary or all(sched.stationary(w, x) is not None for (_s, w, x) in frontier):
                return absorbed, frontier
        nxt: dict[tuple, Fraction] = {}
        for (s, w, x), p in frontier.items():
            for a, q in sched.decide(s, w, x).items():
                r = m.reward[(s, a)]
                w2 = normalize_reward(w + r)
                pq = p * q
                for t, pt in m.trans[(s, a)]:
                    key = (t, w2, sched.update(s, a, t, x, w2))
                    nxt[key] = nxt.get(key, Fraction(0)) + pq * pt
        frontier = nxt
    if epsilon is None:
        raise CyclicModelError(f"unrolling did not terminate within {max_steps} steps; pass a tail bound epsilon")
    raise BudgetExceeded(f"tail mass {float(sum(frontier.values())):.3g} above {epsilon} after {max_steps} steps")


def truncated_distribution(c: Chain, epsilon: Number, max_steps: int = 100_000) -> RewardDistribution:
    """Enumerate the chain's reward law until at most ``epsilon`` probability is unabsorbed."""
    c = getattr(c, "mdp", c)
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if _reachable_topo(c) is not None:
        return exact_distribution(c)
    absorbed, frontier = _unroll(c, _ChainScheduler(), epsilon, max_steps)
    return RewardDistribution.from_mapping(absorbed, sum(frontier.values(), Fraction(0)))


def distribution_of(m, sched: Scheduler, epsilon: Number | None = None, max_steps: int = 100_000) -> RewardDistribution:
    """Law of the total reward of ``m`` under ``sched``.

    Memoryless schedulers go through the induced chain; history-dependent ones
    are unrolled over (state, reward, memory).  Without ``epsilon`` the result
    is exact and cyclic behaviour raises :class:`CyclicModelError`.
    """
    m = getattr(m, "mdp", m)
    eps = None if epsilon is None else Fraction(epsilon)
    if isinstance(sched, MemorylessRandomized):
        c = induce_chain(m, sched)
        if eps is None:
            return exact_distribution(c)
        return truncated_distribution(c, eps, max_steps)
    absorbed, frontier = _unroll(m, sched, eps, max_steps)
    return RewardDistribution.from_mapping(absorbed, sum(frontier.values(), Fraction(0)))


# ---------------------------------------------------------------------------
# Measures on exact distributions


def _require_exact(d: RewardDistribution) -> None:
    if d.tail_mass != 0:
        raise TailMassError(f"distribution has tail mass {d.tail_mass}; use measure_bounds")


def expectation(d: RewardDistribution) -> Fraction:
    _require_exact(d)
    return sum((Fraction(v) * p for v, p in d.atoms), Fraction(0))


def deviation_report(d: RewardDistribution) -> MeasureReport:
    _require_exact(d)
    e = expectation(d)
    var = mad = smad = sv = Fraction(0)
    for v, p in d.atoms:
        dev = Fraction(v) - e
        var += p * dev * dev
        mad += p * abs(dev)
        if dev < 0:
            smad -= p * dev
            sv += p * dev * dev
    return MeasureReport(e, var, mad, smad, sv)


def threshold_shortfall(d: RewardDistribution, t: Number) -> Fraction:
    """E(max(t - X, 0))."""
    _require_exact(d)
    t = Fraction(t)
    return sum((p * (t - v) for v, p in d.atoms if v < t), Fraction(0))


def penalized(d: RewardDistribution, spec: PenaltySpec) -> Fraction:
    if spec.kind == "tbpe":
        return expectation(d) - spec.lam * threshold_shortfall(d, spec.t)
    rep = deviation_report(d)
    penalty = {
        "vpe": rep.variance,
        "madpe": rep.mad,
        "smadpe": rep.smad,
        "svpe": rep.semivariance,
    }[spec.kind]
    return rep.expectation - spec.lam * penalty


# ---------------------------------------------------------------------------
# Bounds for truncated enumeration


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo


@dataclass(frozen=True)
class MeasureBounds:
    """Enclosures of the measures of a law known only up to a tail.

    E and V are exact: the tail's first two moments follow from linear solves
    on the scheduler's stationary continuation.  MAD, SMAD and SV get rigorous
    intervals from the tail's mean and the fact that tail outcomes are at least
    the reward already accumulated.
    """

    expectation: Fraction
    variance: Fraction
    mad: Interval
    smad: Interval
    semivariance: Interval
    tail_mass: Fraction
    enumerated: RewardDistribution

    def penalized(self, spec: PenaltySpec) -> Interval:
        e, lam = self.expectation, spec.lam
        if spec.kind == "vpe":
            return Interval(e - lam * self.variance, e - lam * self.variance)
        if spec.kind == "tbpe":
            raise ValueError("use an exact distribution for tbpe")
        iv = {"madpe": self.mad, "smadpe": self.smad, "svpe": self.semivariance}[spec.kind]
        return Interval(e - lam * iv.hi, e - lam * iv.lo)


def measure_bounds(m, sched: Scheduler | None, epsilon: Number, max_steps: int = 100_000) -> MeasureBounds:
    """Truncated enumeration plus exact tail moments; ``sched=None`` for chains."""
    m = getattr(m, "mdp", m)
    epsilon = Fraction(epsilon)
    if sched is None:
        sched = MemorylessRandomized({s: {m.enabled(s)[0]: 1} for s in m.states if not m.is_trap(s)})
    absorbed, frontier = _unroll(m, sched, epsilon, max_steps, until_stationary=True)
    moments: dict[int, tuple] = {}
    items = []
    for (s, w, x), q in frontier.items():
        st = sched.stationary(w, x)
        key = id(st)
        if key not in moments:
            moments[key] = second_moments(induce_chain(m, st))
        m1, m2 = moments[key]
        w = Fraction(w)
        items.append((w, q, w + m1[s], w * w + 2 * w * m1[s] + m2[s]))
    e = sum((Fraction(v) * p for v, p in absorbed.items()), Fraction(0)) + sum((q * mu for _, q, mu, _ in items), Fraction(0))
    ex2 = sum((Fraction(v) ** 2 * p for v, p in absorbed.items()), Fraction(0)) + sum((q * sq for *_, sq in items), Fraction(0))
    var = ex2 - e * e
    mad_atoms = sum((p * abs(Fraction(v) - e) for v, p in absorbed.items()), Fraction(0))
    sv_atoms = sum((p * (e - v) ** 2 for v, p in absorbed.items() if v < e), Fraction(0))
    mad_lo = mad_hi = mad_atoms
    sv_lo = sv_hi = sv_atoms
    for w, q, mu, _ in items:
        mad_lo += q * abs(mu - e)
        mad_hi += q * (mu - e + 2 * max(Fraction(0), e - w))
        sv_lo += q * max(Fraction(0), e - mu) ** 2
        sv_hi += q * max(Fraction(0), e - w) ** 2
    tail = sum((q for _, q, _, _ in items), Fraction(0))
    return MeasureBounds(
        e,
        var,
        Interval(mad_lo, mad_hi),
        Interval(mad_lo / 2, mad_hi / 2),
        Interval(sv_lo, sv_hi),
        tail,
        RewardDistribution.from_mapping(absorbed, tail),
    )


def distribution_from_mapping(mass: Mapping[Number, Number]) -> RewardDistribution:
    return RewardDistribution.from_mapping({v: Fraction(p) for v, p in mass.items()})
