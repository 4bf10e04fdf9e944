"""End components and normalization to a single almost-surely reached goal trap."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .graph import backward_reachable, tarjan_scc
from .model import Mdp, Number, validate

GOAL = "goal"
ESCAPE = "esc"


class InfiniteExpectationError(ValueError):
    """Some maximal end component collects positive reward, so E^max is infinite."""


@dataclass(frozen=True)
class EndComponent:
    states: frozenset[str]
    actions: Mapping[str, frozenset[str]]
    is_zero: bool

    @property
    def key(self) -> str:
        return min(self.states)


@dataclass(frozen=True, eq=False)
class NormalizedMdp:
    """An MDP whose goal is its unique trap and that has no end components.

    ``provenance`` maps every state of ``mdp`` to the original states it stands for.
    """

    mdp: Mdp
    provenance: Mapping[str, frozenset[str]] = field(default_factory=dict)

    @property
    def goal(self) -> str:
        return self.mdp.goal  # type: ignore[return-value]

    def __getattr__(self, name):
        # delegate the Mdp surface (states, enabled, trans, ...)
        if name.startswith("__"):
            raise AttributeError(name)
        return getattr(self.mdp, name)


def mec_decomposition(m: Mdp) -> list[EndComponent]:
    """Maximal end components by iterated SCC refinement, ordered by smallest state."""
    acts: dict[str, set[str]] = {s: set(m.enabled(s)) for s in m.states if m.enabled(s)}
    while True:
        succ = {s: sorted({t for a in a_s for t, _ in m.trans[(s, a)] if t in acts}) for s, a_s in acts.items()}
        comps = tarjan_scc(sorted(acts), succ)
        comp_of = {s: i for i, comp in enumerate(comps) for s in comp}
        changed = False
        for s in list(acts):
            keep = {a for a in acts[s] if all(comp_of.get(t) == comp_of[s] for t, _ in m.trans[(s, a)])}
            if keep != acts[s]:
                changed = True
                if keep:
                    acts[s] = keep
                else:
                    del acts[s]
        if not changed:
            break
    out = []
    for comp in comps:
        states = frozenset(comp)
        actions = {s: frozenset(acts[s]) for s in sorted(comp)}
        is_zero = all(m.reward[(s, a)] == 0 for s, a_s in actions.items() for a in a_s)
        out.append(EndComponent(states, actions, is_zero))
    out.sort(key=lambda ec: ec.key)
    return out


def check_finite_expectation(m: Mdp) -> bool:
    return all(ec.is_zero for ec in mec_decomposition(m))


def zero_value_states(m: Mdp) -> set[str]:
    """States from which no positive-reward state-action pair is reachable (E^max = 0)."""
    pred: dict[str, set[str]] = {}
    positive = set()
    for (s, a), succ in m.trans.items():
        if m.reward[(s, a)] > 0:
            positive.add(s)
        for t, _ in succ:
            pred.setdefault(t, set()).add(s)
    return set(m.states) - backward_reachable(positive, pred)


def satisfies_assumption(m: Mdp) -> bool:
    """Goal is the unique trap and there are no end components."""
    return (
        m.goal is not None
        and not validate(m)
        and m.traps == (m.goal,)
        and not mec_decomposition(m)
    )


def normalize(m: Mdp) -> NormalizedMdp:
    """Collapse 0-end-components and zero-value states into a single goal trap.

    Models already satisfying the assumption (unique trap ``goal``, no end
    components) are returned unchanged.  Otherwise each end component becomes a
    state ``ec#<k>`` that keeps the actions leaving it plus a reward-0 action
    ``esc`` to the new trap, and then every state with E^max = 0 (all traps among
    them) is merged into ``goal``.
    """
    if isinstance(m, NormalizedMdp):
        return m
    if satisfies_assumption(m):
        return NormalizedMdp(m, {s: frozenset({s}) for s in m.states})
    ecs = mec_decomposition(m)
    if not all(ec.is_zero for ec in ecs):
        bad = [sorted(ec.states) for ec in ecs if not ec.is_zero]
        raise InfiniteExpectationError(f"end components with positive reward: {bad}")

    rename: dict[str, str] = {}
    provenance: dict[str, set[str]] = {}
    for k, ec in enumerate(ecs):
        name = f"ec#{k}"
        for s in ec.states:
            rename[s] = name
        provenance[name] = set(ec.states)
    for s in m.states:
        if s not in rename:
            rename[s] = s
            provenance[s] = {s}

    sink = "__sink__"
    actions: dict[str, dict[str, tuple[Number, dict[str, Fraction]]]] = {}
    for (s, a), succ in m.trans.items():
        src = rename[s]
        if src.startswith("ec#"):
            ec = ecs[int(src[3:])]
            if a in ec.actions.get(s, ()):
                continue
            act = f"{s}.{a}"
        else:
            act = a
        dist: dict[str, Fraction] = {}
        for t, p in succ:
            dist[rename[t]] = dist.get(rename[t], Fraction(0)) + p
        actions.setdefault(src, {})[act] = (m.reward[(s, a)], dist)
    for k in range(len(ecs)):
        actions.setdefault(f"ec#{k}", {})[ESCAPE] = (0, {sink: Fraction(1)})
    states = set(provenance) | {sink}
    collapsed = Mdp.build(states, rename[m.initial], None, actions)

    zero = zero_value_states(collapsed)
    final = {s: (GOAL if s in zero else s) for s in collapsed.states}
    if GOAL in collapsed.states and GOAL not in zero:
        final[GOAL] = GOAL + "~"
    out_actions: dict[str, dict] = {}
    for (s, a), succ in collapsed.trans.items():
        if s in zero:
            continue
        dist = {}
        for t, p in succ:
            dist[final[t]] = dist.get(final[t], Fraction(0)) + p
        out_actions.setdefault(final[s], {})[a] = (collapsed.reward[(s, a)], dist)
    new_prov: dict[str, set[str]] = {}
    for s, tgt in final.items():
        new_prov.setdefault(tgt, set()).update(provenance.get(s, set()))
    out = Mdp.build(set(final.values()), final[collapsed.initial], GOAL, out_actions)
    keep = set(out.states)
    return NormalizedMdp(out, {s: frozenset(v) for s, v in sorted(new_prov.items()) if s in keep})


def assume_normalized(m: Mdp | NormalizedMdp) -> NormalizedMdp:
    """Wrap a model the caller vouches for; checks the assumption when not already wrapped."""
    if isinstance(m, NormalizedMdp):
        return m
    return normalize(m)
