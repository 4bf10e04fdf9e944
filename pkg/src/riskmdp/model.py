"""Domain types for MDPs, Markov chains, schedulers and reward distributions.

All probabilities are exact :class:`fractions.Fraction` values.  Rewards live on
state-action pairs; a Markov chain is an MDP in which every non-trap state has
exactly one action (named ``tau``), so that chain rewards are state rewards.

The line-oriented model format::

    mdp                          # or: chain
    initial s_init
    goal goal
    state s_init
      action alpha reward 0
        -> s0 1/4
        -> s1 3/4
    state goal

In a ``chain`` document the reward sits on the state line and successors follow
directly: ``state s1 reward 1`` then ``-> goal 1``.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

Number = Union[int, Fraction]
Dist = Mapping[str, Fraction]

CHAIN_ACTION = "tau"


class ModelError(ValueError):
    """Base class for model-file and model-consistency errors."""

    category = "model"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" + (f", column {column}" if column is not None else "") if line else ""
        super().__init__(f"{where}: {message}" if where else message)


class ModelSyntaxError(ModelError):
    category = "syntax"


class ProbabilitySumError(ModelError):
    category = "probability-sum"


class NegativeRewardError(ModelError):
    category = "negative-reward"


class UnknownReferenceError(ModelError):
    category = "unknown-reference"


class DuplicateTransitionError(ModelError):
    category = "duplicate"


class SchedulerError(ValueError):
    """Scheduler does not fit the model (missing state, disabled action, bad distribution)."""


def as_fraction(value: Number | str | float) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # floats only arrive from user code; keep the decimal they print as
        return Fraction(repr(value))
    return Fraction(value)


def parse_rational(text: str) -> Fraction:
    """Parse ``p/q`` or a decimal literal exactly (``0.25`` is ``1/4``)."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def fmt(q: Number) -> str:
    """Render a rational as ``p/q`` in lowest terms (integers without denominator)."""
    return str(Fraction(q))


def normalize_reward(r: Number) -> Number:
    r = Fraction(r)
    return int(r) if r.denominator == 1 else r


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with a transition table keyed by (state, action).

    ``trans[(s, a)]`` is a tuple of ``(successor, probability)`` pairs sorted by
    successor; ``reward[(s, a)]`` is the reward of taking ``a`` in ``s``.  A state
    without entries in ``trans`` is a trap.  No validation happens here; use
    :func:`validate` or :func:`parse_model` for checked construction.
    """

    states: tuple[str, ...]
    initial: str
    goal: str | None
    trans: Mapping[tuple[str, str], tuple[tuple[str, Fraction], ...]]
    reward: Mapping[tuple[str, str], Number]
    _enabled: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        enabled: dict[str, list[str]] = {s: [] for s in self.states}
        for s, a in self.trans:
            enabled.setdefault(s, []).append(a)
        object.__setattr__(self, "_enabled", {s: tuple(sorted(acts)) for s, acts in enabled.items()})

    @classmethod
    def build(
        cls,
        states: Iterable[str],
        initial: str,
        goal: str | None,
        actions: Mapping[str, Mapping[str, tuple[Number, Mapping[str, Number | str]]]],
    ) -> "Mdp":
        """Convenience constructor: ``actions[s][a] = (reward, {succ: prob})``."""
        trans = {}
        reward = {}
        for s, acts in actions.items():
            for a, (r, succ) in acts.items():
                merged: dict[str, Fraction] = {}
                for t, p in succ.items():
                    merged[t] = merged.get(t, Fraction(0)) + as_fraction(p)
                trans[(s, a)] = tuple(sorted(merged.items()))
                reward[(s, a)] = normalize_reward(as_fraction(r))
        all_states = set(states) | set(actions) | {initial}
        if goal is not None:
            all_states.add(goal)
        for succ in trans.values():
            all_states.update(t for t, _ in succ)
        return cls(tuple(sorted(all_states)), initial, goal, trans, reward)

    def enabled(self, s: str) -> tuple[str, ...]:
        return self._enabled.get(s, ())

    def is_trap(self, s: str) -> bool:
        return not self._enabled.get(s)

    def successors(self, s: str, a: str) -> tuple[tuple[str, Fraction], ...]:
        return self.trans[(s, a)]

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(sorted({a for _, a in self.trans}))

    @property
    def traps(self) -> tuple[str, ...]:
        return tuple(s for s in self.states if self.is_trap(s))

    @property
    def max_reward(self) -> Number:
        return max(self.reward.values(), default=0)

    def decision_states(self) -> tuple[str, ...]:
        return tuple(s for s in self.states if len(self.enabled(s)) > 1)

    def reachable(self, start: str | None = None) -> set[str]:
        seen = {start or self.initial}
        stack = [start or self.initial]
        while stack:
            s = stack.pop()
            for a in self.enabled(s):
                for t, _ in self.trans[(s, a)]:
                    if t not in seen:
                        seen.add(t)
                        stack.append(t)
        return seen

    def is_acyclic(self) -> bool:
        return topological_order(self) is not None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.states == other.states
            and self.initial == other.initial
            and self.goal == other.goal
            and dict(self.trans) == dict(other.trans)
            and {k: Fraction(v) for k, v in self.reward.items()} == {k: Fraction(v) for k, v in other.reward.items()}
            and self.is_chain == other.is_chain
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def is_chain(self) -> bool:
        return False

    def digest(self) -> str:
        """Short content hash of the canonical serialization."""
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]


class Chain(Mdp):
    """Validated Markov-chain view: at most one action (``tau``) per state."""

    @classmethod
    def from_mdp(cls, m: Mdp) -> "Chain":
        for s in m.states:
            acts = m.enabled(s)
            if len(acts) > 1:
                raise ModelError(f"state {s!r} has {len(acts)} actions; a chain allows one")
        trans = {(s, CHAIN_ACTION): succ for (s, _), succ in m.trans.items()}
        reward = {(s, CHAIN_ACTION): r for (s, _), r in m.reward.items()}
        return cls(m.states, m.initial, m.goal, trans, reward)

    @classmethod
    def build_chain(
        cls,
        initial: str,
        goal: str | None,
        succ: Mapping[str, Mapping[str, Number | str]],
        reward: Mapping[str, Number] | None = None,
        states: Iterable[str] = (),
    ) -> "Chain":
        reward = reward or {}
        actions = {s: {CHAIN_ACTION: (reward.get(s, 0), d)} for s, d in succ.items() if d}
        m = Mdp.build(states, initial, goal, actions)
        return cls(m.states, m.initial, m.goal, m.trans, m.reward)

    @property
    def is_chain(self) -> bool:
        return True

    def succ(self, s: str) -> tuple[tuple[str, Fraction], ...]:
        return self.trans.get((s, CHAIN_ACTION), ())

    def state_reward(self, s: str) -> Number:
        return self.reward.get((s, CHAIN_ACTION), 0)


def topological_order(m: Mdp) -> list[str] | None:
    """Kahn ordering over all state-action edges, or None if the graph has a cycle."""
    indeg = {s: 0 for s in m.states}
    out: dict[str, set[str]] = {s: set() for s in m.states}
    for (s, _a), succ in m.trans.items():
        for t, _ in succ:
            if t not in out[s]:
                out[s].add(t)
                indeg[t] += 1
    ready = sorted(s for s, d in indeg.items() if d == 0)
    order = []
    while ready:
        s = ready.pop()
        order.append(s)
        for t in sorted(out[s]):
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    return order if len(order) == len(m.states) else None


# ---------------------------------------------------------------------------
# Reward distributions


@dataclass(frozen=True)
class RewardDistribution:
    """Finite law of the total reward; ``tail_mass`` is un-enumerated probability."""

    atoms: tuple[tuple[Number, Fraction], ...]
    tail_mass: Fraction = Fraction(0)

    @classmethod
    def from_mapping(cls, mass: Mapping[Number, Number], tail_mass: Number = 0) -> "RewardDistribution":
        atoms = tuple(
            (normalize_reward(v), Fraction(p)) for v, p in sorted(mass.items(), key=lambda kv: Fraction(kv[0])) if p != 0
        )
        return cls(atoms, Fraction(tail_mass))

    def as_dict(self) -> dict[Number, Fraction]:
        return dict(self.atoms)

    @property
    def is_exact(self) -> bool:
        return self.tail_mass == 0

    def total(self) -> Fraction:
        return sum((p for _, p in self.atoms), Fraction(0)) + self.tail_mass

    def to_json(self) -> list[list[str]]:
        return [[fmt(v), fmt(p)] for v, p in self.atoms]

    @classmethod
    def from_json(cls, rows: Sequence[Sequence[str]], tail_mass: Number = 0) -> "RewardDistribution":
        return cls.from_mapping({parse_rational(v): parse_rational(p) for v, p in rows}, tail_mass)


# ---------------------------------------------------------------------------
# Schedulers
#
# Every scheduler answers ``decide(state, reward, memory)`` with a distribution
# over actions and advances its memory with ``update``.  Memoryless and
# reward-based schedulers carry ``None`` as memory.


def _check_dist(dist: Mapping[str, Fraction], where: str) -> dict[str, Fraction]:
    dist = {a: Fraction(p) for a, p in dist.items() if Fraction(p) != 0}
    if any(p < 0 for p in dist.values()):
        raise SchedulerError(f"negative probability at {where}")
    if sum(dist.values(), Fraction(0)) != 1:
        raise SchedulerError(f"distribution at {where} sums to {sum(dist.values(), Fraction(0))}, not 1")
    return dict(sorted(dist.items()))


def dirac(action: str) -> dict[str, Fraction]:
    return {action: Fraction(1)}


class Scheduler:
    initial_memory = None

    def decide(self, state: str, reward: Number, memory) -> Mapping[str, Fraction]:
        raise NotImplementedError

    def update(self, state: str, action: str, nxt: str, memory, reward: Number):
        """Memory after moving ``state --action--> nxt``; ``reward`` is the new total."""
        return memory

    def stationary(self, reward: Number, memory) -> "MemorylessRandomized | None":
        """A memoryless scheduler that agrees with this one from (reward, memory) on, if any."""
        return None

    def check(self, m: Mdp) -> None:
        raise NotImplementedError


@dataclass(frozen=True)
class MemorylessRandomized(Scheduler):
    choice: Mapping[str, Mapping[str, Fraction]]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "choice", {s: _check_dist(d, repr(s)) for s, d in sorted(self.choice.items())}
        )

    @classmethod
    def deterministic(cls, policy: Mapping[str, str]) -> "MemorylessRandomized":
        return cls({s: dirac(a) for s, a in policy.items()})

    def decide(self, state, reward=0, memory=None):
        try:
            return self.choice[state]
        except KeyError:
            raise SchedulerError(f"scheduler has no choice for state {state!r}") from None

    def stationary(self, reward, memory):
        return self

    def check(self, m: Mdp) -> None:
        for s, dist in self.choice.items():
            for a in dist:
                if a not in m.enabled(s):
                    raise SchedulerError(f"action {a!r} is not enabled in state {s!r}")


@dataclass(frozen=True)
class RewardBasedRandomized(Scheduler):
    """Choice per (state, accumulated reward); pairs not in ``table`` use ``default``.

    ``bound`` is the largest reward level with explicit entries; above it the
    scheduler is the memoryless ``default``.
    """

    table: Mapping[tuple[str, int], Mapping[str, Fraction]]
    default: MemorylessRandomized
    bound: int = -1

    def __post_init__(self) -> None:
        table = {k: _check_dist(d, repr(k)) for k, d in sorted(self.table.items(), key=lambda kv: (kv[0][1], kv[0][0]))}
        object.__setattr__(self, "table", table)
        if table and self.bound < max(w for _, w in table):
            object.__setattr__(self, "bound", max(w for _, w in table))

    def decide(self, state, reward, memory=None):
        dist = self.table.get((state, reward))
        if dist is not None:
            return dist
        return self.default.decide(state)

    def stationary(self, reward, memory):
        return self.default if reward > self.bound else None

    def check(self, m: Mdp) -> None:
        self.default.check(m)
        for (s, _w), dist in self.table.items():
            for a in dist:
                if a not in m.enabled(s):
                    raise SchedulerError(f"action {a!r} is not enabled in state {s!r}")


@dataclass(frozen=True)
class FiniteMemoryDeterministic(Scheduler):
    """Deterministic scheduler driven by a finite memory automaton."""

    modes: frozenset
    initial_mode: object
    transition: object  # callable (state, action, next_state, mode, reward) -> mode
    choice: Mapping[tuple[str, object], str]

    @property
    def initial_memory(self):  # type: ignore[override]
        return self.initial_mode

    def decide(self, state, reward, memory):
        try:
            return dirac(self.choice[(state, memory)])
        except KeyError:
            raise SchedulerError(f"no choice for state {state!r} in memory mode {memory!r}") from None

    def update(self, state, action, nxt, memory, reward):
        return self.transition(state, action, nxt, memory, reward)

    def check(self, m: Mdp) -> None:
        for (s, _x), a in self.choice.items():
            if a not in m.enabled(s):
                raise SchedulerError(f"action {a!r} is not enabled in state {s!r}")


class CounterScheduler(FiniteMemoryDeterministic):
    """Memory is the accumulated reward, clamped to ``cap`` once it reaches ``threshold``."""

    def __init__(self, threshold: Number, choice: Mapping[tuple[str, int], str]):
        threshold = Fraction(threshold)
        cap = max(0, math.ceil(threshold))

        def step(state, action, nxt, mode, reward):
            return cap if reward >= threshold else reward

        object.__setattr__(self, "threshold", threshold)
        object.__setattr__(self, "cap", cap)
        ordered = dict(sorted(choice.items(), key=lambda kv: (kv[0][1], kv[0][0])))
        super().__init__(frozenset(range(cap + 1)), 0, step, ordered)

    def stationary(self, reward, memory):
        if memory != self.cap:
            return None
        top = {s: a for (s, w), a in self.choice.items() if w == self.cap}
        return MemorylessRandomized.deterministic(top)


# ---------------------------------------------------------------------------
# Parsing and serialization

_TOKEN = re.compile(r"\S+")


def _tokens(line: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(line)]


def parse_model(text: str) -> Mdp:
    """Parse a model document into a checked :class:`Mdp` or :class:`Chain`."""
    kind = None
    initial = goal = None
    declared: list[str] = []
    blocks: dict[str, dict[str, tuple[Fraction, dict[str, Fraction], int]]] = {}
    chain_rewards: dict[str, Fraction] = {}
    cur_state = cur_action = None
    cur_line: dict[tuple[str, str], int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        head, col = toks[0]
        words = [t for t, _ in toks]

        def bad(msg: str, column: int = col) -> ModelSyntaxError:
            return ModelSyntaxError(msg, lineno, column)

        if kind is None:
            if head not in ("mdp", "chain") or len(toks) != 1:
                raise bad("document must start with 'mdp' or 'chain'")
            kind = head
            continue
        if head == "initial" and len(toks) == 2:
            initial = words[1]
        elif head == "goal" and len(toks) == 2:
            goal = words[1]
        elif head == "state":
            if len(toks) not in (2, 4) or (len(toks) == 4 and (words[2] != "reward" or kind != "chain")):
                raise bad("expected 'state <id>'" + (" [reward <r>]" if kind == "chain" else ""))
            cur_state = words[1]
            if cur_state in blocks:
                raise DuplicateTransitionError(f"state {cur_state!r} declared twice", lineno, toks[1][1])
            blocks[cur_state] = {}
            declared.append(cur_state)
            cur_action = None
            if kind == "chain":
                r = _parse_reward(words[3], lineno, toks[3][1]) if len(toks) == 4 else Fraction(0)
                chain_rewards[cur_state] = r
                cur_action = CHAIN_ACTION
        elif head == "action":
            if kind == "chain":
                raise bad("chain documents take successors directly under 'state'")
            if cur_state is None:
                raise bad("'action' outside a state block")
            if len(toks) != 4 or words[2] != "reward":
                raise bad("expected 'action <id> reward <r>'")
            cur_action = words[1]
            if cur_action in blocks[cur_state]:
                raise DuplicateTransitionError(
                    f"action {cur_action!r} declared twice in state {cur_state!r}", lineno, toks[1][1]
                )
            blocks[cur_state][cur_action] = (_parse_reward(words[3], lineno, toks[3][1]), {}, lineno)
        elif head == "->":
            if cur_state is None or cur_action is None:
                raise bad("successor line outside an action")
            if len(toks) != 3:
                raise bad("expected '-> <state> <probability>'")
            try:
                p = parse_rational(words[2])
            except ValueError:
                raise bad(f"bad probability {words[2]!r}", toks[2][1]) from None
            if kind == "chain" and cur_action not in blocks[cur_state]:
                blocks[cur_state][cur_action] = (chain_rewards[cur_state], {}, lineno)
            succ = blocks[cur_state][cur_action][1]
            if words[1] in succ:
                raise DuplicateTransitionError(
                    f"successor {words[1]!r} listed twice for ({cur_state}, {cur_action})", lineno, toks[1][1]
                )
            if not 0 < p <= 1:
                raise ProbabilitySumError(f"probability {p} outside (0, 1]", lineno, toks[2][1])
            succ[words[1]] = p
            cur_line[(cur_state, cur_action)] = lineno
        else:
            raise bad(f"unexpected {head!r}")

    if kind is None:
        raise ModelSyntaxError("empty document", 1, 1)
    if initial is None:
        raise ModelSyntaxError("missing 'initial' line")
    known = set(declared)
    if goal is not None:
        known.add(goal)
    if initial not in known:
        raise UnknownReferenceError(f"initial state {initial!r} is not declared")
    trans = {}
    reward = {}
    for s, acts in blocks.items():
        for a, (r, succ, lineno) in acts.items():
            for t in succ:
                if t not in known:
                    raise UnknownReferenceError(f"unknown successor {t!r} of ({s}, {a})", cur_line.get((s, a), lineno))
            total = sum(succ.values(), Fraction(0))
            if total != 1:
                raise ProbabilitySumError(
                    f"successors of ({s}, {a}) sum to {total}, not 1", cur_line.get((s, a), lineno)
                )
            trans[(s, a)] = tuple(sorted(succ.items()))
            reward[(s, a)] = normalize_reward(r)
    m = Mdp(tuple(sorted(known)), initial, goal, trans, reward)
    if kind == "chain":
        return Chain.from_mdp(m)
    return m


def _parse_reward(text: str, lineno: int, col: int) -> Fraction:
    try:
        r = parse_rational(text)
    except ValueError:
        raise ModelSyntaxError(f"bad reward {text!r}", lineno, col) from None
    if r < 0:
        raise NegativeRewardError(f"negative reward {r}", lineno, col)
    if r.denominator != 1:
        raise ModelSyntaxError(f"reward {r} is not an integer; scale rewards to integers first", lineno, col)
    return r


def serialize(m: Mdp) -> str:
    """Canonical text form; ``parse_model(serialize(m)) == m`` for valid models."""
    lines = ["chain" if m.is_chain else "mdp", f"initial {m.initial}"]
    if m.goal is not None:
        lines.append(f"goal {m.goal}")
    for s in m.states:
        if m.is_chain:
            succ = m.trans.get((s, CHAIN_ACTION))
            r = m.reward.get((s, CHAIN_ACTION), 0)
            lines.append(f"state {s}" + (f" reward {fmt(r)}" if succ is not None else ""))
            for t, p in succ or ():
                lines.append(f"  -> {t} {fmt(p)}")
            continue
        lines.append(f"state {s}")
        for a in m.enabled(s):
            lines.append(f"  action {a} reward {fmt(m.reward[(s, a)])}")
            for t, p in m.trans[(s, a)]:
                lines.append(f"    -> {t} {fmt(p)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


def validate(m: Mdp) -> ValidationReport:
    out: list[Violation] = []
    known = set(m.states)
    if m.initial not in known:
        out.append(Violation("unknown-state", f"initial state {m.initial!r} not in states"))
    if m.goal is not None:
        if m.goal not in known:
            out.append(Violation("unknown-state", f"goal {m.goal!r} not in states"))
        elif not m.is_trap(m.goal):
            out.append(Violation("goal-not-trap", f"goal {m.goal!r} has enabled actions {list(m.enabled(m.goal))}"))
    for (s, a), succ in sorted(m.trans.items()):
        if s not in known:
            out.append(Violation("unknown-state", f"transition source {s!r} not in states"))
        for t, p in succ:
            if t not in known:
                out.append(Violation("unknown-state", f"successor {t!r} of ({s}, {a}) not in states"))
            if not 0 < p <= 1:
                out.append(Violation("probability-range", f"P({s}, {a}, {t}) = {p} outside (0, 1]"))
        total = sum((p for _, p in succ), Fraction(0))
        if total != 1:
            out.append(Violation("probability-sum", f"successors of ({s}, {a}) sum to {total}"))
        r = Fraction(m.reward.get((s, a), 0))
        if r < 0:
            out.append(Violation("negative-reward", f"reward of ({s}, {a}) is {r}"))
        elif r.denominator != 1:
            out.append(Violation("non-integer-reward", f"reward of ({s}, {a}) is {r}"))
    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# Chains induced by memoryless schedulers


def action_node(s: str, a: str) -> str:
    return f"{s}/{a}"


def induce_chain(m: Mdp, sched: MemorylessRandomized) -> Chain:
    """Markov chain of ``m`` under a memoryless randomized scheduler.

    When all actions chosen with positive probability in ``s`` share a reward,
    ``s`` keeps that reward and gets the mixed successor distribution.  When the
    rewards differ, ``s`` gets reward 0 and moves to one intermediate node
    ``s/a`` per chosen action, carrying ``rew(s, a)``, so integer rewards survive
    exactly.
    """
    succ: dict[str, dict[str, Fraction]] = {}
    reward: dict[str, Number] = {}
    for s in m.states:
        if m.is_trap(s):
            continue
        if s not in sched.choice:
            raise SchedulerError(f"scheduler has no choice for state {s!r}")
        dist = sched.choice[s]
        for a in dist:
            if a not in m.enabled(s):
                raise SchedulerError(f"action {a!r} is not enabled in state {s!r}")
        rewards = {m.reward[(s, a)] for a in dist}
        if len(rewards) == 1:
            mixed: dict[str, Fraction] = {}
            for a, q in dist.items():
                for t, p in m.trans[(s, a)]:
                    mixed[t] = mixed.get(t, Fraction(0)) + q * p
            succ[s] = mixed
            reward[s] = rewards.pop()
        else:
            succ[s] = {action_node(s, a): q for a, q in dist.items()}
            reward[s] = 0
            for a in dist:
                node = action_node(s, a)
                succ[node] = dict(m.trans[(s, a)])
                reward[node] = m.reward[(s, a)]
    return Chain.build_chain(m.initial, m.goal, succ, reward, states=m.states)


# ---------------------------------------------------------------------------
# Scheduler files
#
#   scheduler memoryless | reward-based | counter
#   threshold <t>                      # counter schedulers only
#   state <id> [reward <w>]: <action>=<prob> ...


def serialize_scheduler(sched: Scheduler) -> str:
    if isinstance(sched, CounterScheduler):
        lines = ["scheduler counter", f"threshold {fmt(sched.threshold)}"]
        for (s, w), a in sched.choice.items():
            lines.append(f"state {s} reward {w}: {a}=1")
        return "\n".join(lines) + "\n"
    if isinstance(sched, RewardBasedRandomized):
        lines = ["scheduler reward-based"]
        for s, dist in sched.default.choice.items():
            lines.append(f"state {s}: " + " ".join(f"{a}={fmt(p)}" for a, p in dist.items()))
        for (s, w), dist in sched.table.items():
            lines.append(f"state {s} reward {w}: " + " ".join(f"{a}={fmt(p)}" for a, p in dist.items()))
        return "\n".join(lines) + "\n"
    if isinstance(sched, MemorylessRandomized):
        lines = ["scheduler memoryless"]
        for s, dist in sched.choice.items():
            lines.append(f"state {s}: " + " ".join(f"{a}={fmt(p)}" for a, p in dist.items()))
        return "\n".join(lines) + "\n"
    raise TypeError(f"cannot serialize {type(sched).__name__}")


_SCHED_LINE = re.compile(r"^state\s+(\S+)(?:\s+reward\s+(\d+))?\s*:\s*(.*)$")


def parse_scheduler(text: str) -> Scheduler:
    kind = None
    threshold = None
    plain: dict[str, dict[str, Fraction]] = {}
    table: dict[tuple[str, int], dict[str, Fraction]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("scheduler"):
            kind = line.split()[1] if len(line.split()) == 2 else None
            if kind not in ("memoryless", "reward-based", "counter"):
                raise ModelSyntaxError(f"unknown scheduler kind in {line!r}", lineno)
            continue
        if line.startswith("threshold"):
            threshold = parse_rational(line.split()[1])
            continue
        match = _SCHED_LINE.match(line)
        if not match:
            raise ModelSyntaxError(f"bad scheduler line {line!r}", lineno)
        s, w, rest = match.groups()
        dist: dict[str, Fraction] = {}
        for item in rest.split():
            if "=" not in item:
                raise ModelSyntaxError(f"expected <action>=<prob>, got {item!r}", lineno)
            a, p = item.split("=", 1)
            dist[a] = dist.get(a, Fraction(0)) + parse_rational(p)
        if w is None:
            plain[s] = dist
        else:
            table[(s, int(w))] = dist
    if kind is None:
        kind = "reward-based" if table else "memoryless"
    if kind == "counter":
        if threshold is None:
            raise ModelSyntaxError("counter scheduler needs a 'threshold' line")
        choice = {}
        for key, dist in table.items():
            (a, p), = dist.items()
            if p != 1:
                raise SchedulerError("counter schedulers are deterministic")
            choice[key] = a
        return CounterScheduler(threshold, choice)
    if kind == "memoryless":
        if table:
            raise ModelSyntaxError("memoryless scheduler cannot have 'reward' qualifiers")
        return MemorylessRandomized(plain)
    return RewardBasedRandomized(table, MemorylessRandomized(plain))


def model_from_file(path: str) -> Mdp:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())
