"""Expected total reward on EC-free MDPs: exact policy iteration and float value iteration.

Rewards may be arbitrary rationals (the threshold unfolding produces negative
ones); the only requirement is that the model has no end components, so every
policy reaches a trap almost surely.  Traps have value 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence

from .graph import tarjan_scc
from .model import Chain, MemorylessRandomized, Mdp, Number, induce_chain

MAX = "max"
MIN = "min"


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ValueTable:
    values: Mapping[str, Number]
    policy: Mapping[str, str]
    direction: str
    exact: bool = True
    sweeps: int = 0

    def __getitem__(self, s: str) -> Number:
        return self.values[s]


def _mdp(m) -> Mdp:
    return getattr(m, "mdp", m)


# ---------------------------------------------------------------------------
# Exact affine systems  v(u) = c(u) + sum_t a(u, t) v(t)


Rows = Mapping[Hashable, tuple[Fraction, Sequence[tuple[Hashable, Fraction]]]]


def solve_affine(rows: Rows) -> dict:
    """Solve a fixed-point system whose unknowns are the row keys.

    Unknowns without a row are 0.  The dependency graph is split into SCCs;
    singletons (with or without a self-loop) are solved in closed form and
    larger blocks by Gaussian elimination with partial pivoting on magnitude.
    Raises ZeroDivisionError if a block is singular (a closed recurrent class).
    """
    nodes = list(rows)
    deps = {u: [t for t, _ in rows[u][1] if t in rows] for u in nodes}
    val: dict = {}
    for comp in tarjan_scc(nodes, deps):
        if len(comp) == 1:
            u = comp[0]
            c, terms = rows[u]
            acc = Fraction(c)
            self_coef = Fraction(0)
            for t, a in terms:
                if t == u:
                    self_coef += a
                elif t in val:
                    acc += a * val[t]
            val[u] = acc / (1 - self_coef)
            continue
        _solve_block(comp, rows, val)
    return val


def _solve_block(comp: list, rows: Rows, val: dict) -> None:
    idx = {u: i for i, u in enumerate(comp)}
    n = len(comp)
    mat = [[Fraction(0)] * (n + 1) for _ in range(n)]
    for i, u in enumerate(comp):
        c, terms = rows[u]
        row = mat[i]
        row[i] += 1
        rhs = Fraction(c)
        for t, a in terms:
            j = idx.get(t)
            if j is not None:
                row[j] -= a
            elif t in val:
                rhs += a * val[t]
        row[n] = rhs
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(mat[r][col]))
        if mat[piv][col] == 0:
            raise ZeroDivisionError("singular block: the model has an end component")
        mat[col], mat[piv] = mat[piv], mat[col]
        prow = mat[col]
        inv = 1 / prow[col]
        nz = [j for j in range(col, n + 1) if prow[j]]
        for r in range(n):
            if r == col:
                continue
            f = mat[r][col]
            if f:
                f *= inv
                row = mat[r]
                for j in nz:
                    row[j] -= f * prow[j]
    for i, u in enumerate(comp):
        val[u] = mat[i][n] / mat[i][i]


def evaluate_policy(m: Mdp, policy: Mapping[str, str]) -> dict[str, Fraction]:
    """Exact expected total reward from every state under a deterministic memoryless policy."""
    m = _mdp(m)
    rows = {s: (Fraction(m.reward[(s, a)]), m.trans[(s, a)]) for s, a in policy.items()}
    val = solve_affine(rows)
    return {s: val.get(s, Fraction(0)) for s in m.states}


def evaluate_scheduler(m: Mdp, sched: MemorylessRandomized) -> dict[str, Fraction]:
    """Expected total reward from every state of ``m`` under a memoryless randomized scheduler."""
    m = _mdp(m)
    rows = {}
    for s in m.states:
        if m.is_trap(s):
            continue
        dist = sched.decide(s)
        c = sum((q * m.reward[(s, a)] for a, q in dist.items()), Fraction(0))
        terms = [(t, q * p) for a, q in dist.items() for t, p in m.trans[(s, a)]]
        rows[s] = (c, terms)
    val = solve_affine(rows)
    return {s: val.get(s, Fraction(0)) for s in m.states}


def chain_values(c: Chain) -> dict[str, Fraction]:
    rows = {s: (Fraction(c.state_reward(s)), c.succ(s)) for s in c.states if not c.is_trap(s)}
    val = solve_affine(rows)
    return {s: val.get(s, Fraction(0)) for s in c.states}


def visit_frequencies(c: Chain, start: str | None = None) -> dict[str, Fraction]:
    """Expected number of visits to each state; for traps this is the absorption probability."""
    start = c.initial if start is None else start
    inflow: dict[str, list] = {s: [] for s in c.states}
    for s in c.states:
        for t, p in c.succ(s):
            inflow[t].append((s, p))
    rows = {s: (Fraction(1 if s == start else 0), inflow[s]) for s in c.states}
    return solve_affine(rows)


def second_moments(c: Chain) -> tuple[dict[str, Fraction], dict[str, Fraction]]:
    """Exact first and second moments of the remaining reward from every state."""
    first = chain_values(c)
    rows = {}
    for s in c.states:
        if c.is_trap(s):
            continue
        r = Fraction(c.state_reward(s))
        const = r * r + 2 * r * sum((p * first[t] for t, p in c.succ(s)), Fraction(0))
        rows[s] = (const, c.succ(s))
    val = solve_affine(rows)
    return first, {s: val.get(s, Fraction(0)) for s in c.states}


# ---------------------------------------------------------------------------
# Policy iteration


def _q(m: Mdp, s: str, a: str, v: Mapping[str, Fraction]) -> Fraction:
    return m.reward[(s, a)] + sum((p * v[t] for t, p in m.trans[(s, a)]), Fraction(0))


def _greedy(m: Mdp, s: str, v: Mapping[str, Fraction], direction: str) -> tuple[Fraction, str]:
    qs = [(_q(m, s, a, v), a) for a in m.enabled(s)]
    best = max(q for q, _ in qs) if direction == MAX else min(q for q, _ in qs)
    return best, min(a for q, a in qs if q == best)


def policy_iteration(m, direction: str = MAX, initial_policy: Mapping[str, str] | None = None) -> ValueTable:
    """Exact optimal values and the lexicographically least optimal policy.

    States are processed SCC by SCC, sinks first.  A singleton SCC is solved in
    closed form (its self-loop divided out); a larger one runs policy
    iteration on the block with the values below it already fixed.  Ties in the
    final greedy policy go to the smallest action name.
    """
    m = _mdp(m)
    better = (lambda x, y: x > y) if direction == MAX else (lambda x, y: x < y)
    pick = max if direction == MAX else min
    start = dict(initial_policy or {})
    succ = {s: sorted({t for a in m.enabled(s) for t, _ in m.trans[(s, a)]}) for s in m.states}
    v: dict[str, Fraction] = {}
    rounds = 0
    for comp in tarjan_scc(list(m.states), succ):
        if len(comp) == 1:
            s = comp[0]
            if m.is_trap(s):
                v[s] = Fraction(0)
                continue
            opts = []
            for a in m.enabled(s):
                loop = Fraction(0)
                acc = Fraction(m.reward[(s, a)])
                for t, p in m.trans[(s, a)]:
                    if t == s:
                        loop += p
                    else:
                        acc += p * v[t]
                opts.append(acc / (1 - loop))
            v[s] = pick(opts)
            rounds = max(rounds, 1)
            continue
        block = set(comp)
        policy = {s: start.get(s) or m.enabled(s)[0] for s in comp}
        local = 0
        while True:
            local += 1
            rows = {}
            for s, a in policy.items():
                const = Fraction(m.reward[(s, a)])
                terms = []
                for t, p in m.trans[(s, a)]:
                    if t in block:
                        terms.append((t, p))
                    else:
                        const += p * v[t]
                rows[s] = (const, terms)
            v.update(solve_affine(rows))
            changed = False
            for s in comp:
                best, arg = _greedy(m, s, v, direction)
                if better(best, _q(m, s, policy[s], v)):
                    policy[s] = arg
                    changed = True
            if not changed:
                break
        rounds = max(rounds, local)
    values = {s: v[s] for s in m.states}
    final = {s: _greedy(m, s, values, direction)[1] for s in m.states if not m.is_trap(s)}
    return ValueTable(values, dict(sorted(final.items())), direction, True, rounds)


def max_expected_reward(m) -> ValueTable:
    """Exact E^max from every state with the lexicographically least optimal policy."""
    return policy_iteration(m, MAX)


def min_expected_reward(m) -> ValueTable:
    return policy_iteration(m, MIN)


def bellman_residual(m, table: ValueTable) -> dict[str, Number]:
    """|v(s) - best_a Q(s, a)| at every state, computed in the table's arithmetic."""
    m = _mdp(m)
    out = {}
    for s in m.states:
        if m.is_trap(s):
            out[s] = abs(table.values[s])
            continue
        qs = [
            m.reward[(s, a)] + sum(p * table.values[t] for t, p in m.trans[(s, a)])
            for a in m.enabled(s)
        ]
        best = max(qs) if table.direction == MAX else min(qs)
        out[s] = abs(table.values[s] - best)
    return out


# ---------------------------------------------------------------------------
# Float value iteration


def sweep_order(m: Mdp) -> list[str]:
    """Fixed Gauss-Seidel order: SCCs of the transition graph, sinks first."""
    succ = {s: sorted({t for a in m.enabled(s) for t, _ in m.trans[(s, a)]}) for s in m.states}
    return [s for comp in tarjan_scc(list(m.states), succ) for s in sorted(comp)]


def value_iteration(m, direction: str = MAX, tolerance: float = 1e-9, max_sweeps: int = 100_000) -> ValueTable:
    """Gauss-Seidel value iteration in floats.

    Self-loops are eliminated in closed form, so acyclic models and models whose
    only cycles are self-loops converge in one sweep plus the confirming one.
    Stops when the sup-norm change of a sweep is at most ``tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    m = _mdp(m)
    pick = max if direction == MAX else min
    order = [s for s in sweep_order(m) if not m.is_trap(s)]
    compiled = {}
    for s in order:
        opts = []
        for a in m.enabled(s):
            loop = 0.0
            rest = []
            for t, p in m.trans[(s, a)]:
                if t == s:
                    loop += float(p)
                else:
                    rest.append((t, float(p)))
            opts.append((a, float(m.reward[(s, a)]), loop, rest))
        compiled[s] = opts
    v = {s: 0.0 for s in m.states}
    for sweep in range(1, max_sweeps + 1):
        diff = 0.0
        for s in order:
            new = pick((r + sum(p * v[t] for t, p in rest)) / (1.0 - loop) for _a, r, loop, rest in compiled[s])
            d = abs(new - v[s])
            if d > diff:
                diff = d
            v[s] = new
        if diff <= tolerance:
            break
    else:
        raise NonConvergenceError(f"no convergence within {max_sweeps} sweeps (last change {diff:g})")
    policy = {}
    for s in order:
        qs = [((r + sum(p * v[t] for t, p in rest)) / (1.0 - loop), a) for a, r, loop, rest in compiled[s]]
        best = pick(q for q, _ in qs)
        slack = tolerance * 10
        policy[s] = min(a for q, a in qs if abs(q - best) <= slack)
    return ValueTable(v, dict(sorted(policy.items())), direction, False, sweep)


def scheduler_value(m, sched: MemorylessRandomized) -> Fraction:
    """Expected total reward from the initial state via the induced chain."""
    c = induce_chain(_mdp(m), sched)
    return chain_values(c)[c.initial]


def iter_policies(m: Mdp) -> Iterable[dict[str, str]]:
    """All deterministic memoryless policies (exponential; oracle-sized models only)."""
    import itertools

    m = _mdp(m)
    states = [s for s in m.states if not m.is_trap(s)]
    for combo in itertools.product(*(m.enabled(s) for s in states)):
        yield dict(zip(states, combo))
