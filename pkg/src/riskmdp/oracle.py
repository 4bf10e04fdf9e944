"""Ground truth by brute force: path enumeration, scheduler grids, Monte Carlo and LP vertex enumeration.

Nothing here reuses the solver modules' algorithms.  Path enumeration walks
maximal paths one by one without merging, grid search evaluates schedulers
point by point, and the LP oracle enumerates basic solutions.

Random numbers come from numpy's Philox4x64 counter-based generator.  Batch
``i`` of a simulation with seed ``s`` draws from
``Generator(Philox(key=s).jumped(i))``; batches have a fixed size, so results
depend only on (seed, n, model, scheduler, batch size).
"""
from __future__ import annotations

import heapq
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np

from .model import (
    Mdp,
    MemorylessRandomized,
    Number,
    RewardBasedRandomized,
    RewardDistribution,
    Scheduler,
)

DEFAULT_BATCH = 1 << 16


class OracleBudgetError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Path enumeration


def iter_paths(m: Mdp, sched: Scheduler, max_len: int = 10_000) -> Iterator[tuple[tuple, Fraction, Number]]:
    """Yield (path, probability, reward) for every maximal path, depth-first.

    A path is a tuple ``(s0, a0, s1, a1, ..., sn)``.  Paths still running after
    ``max_len`` steps are yielded with reward ``None`` (their mass is tail).
    """
    stack = [((m.initial,), Fraction(1), 0, sched.initial_memory)]
    while stack:
        path, prob, rew, mem = stack.pop()
        s = path[-1]
        if m.is_trap(s):
            yield path, prob, rew
            continue
        if (len(path) - 1) // 2 >= max_len:
            yield path, prob, None
            continue
        dist = sched.decide(s, rew, mem)
        for a, q in sorted(dist.items(), reverse=True):
            r = m.reward[(s, a)]
            for t, p in sorted(m.trans[(s, a)], reverse=True):
                new_rew = rew + r
                stack.append((path + (a, t), prob * q * p, new_rew, sched.update(s, a, t, mem, new_rew)))


def enumerate_paths(m: Mdp, sched: Scheduler, max_paths: int = 1_000_000, max_len: int = 10_000) -> RewardDistribution:
    """Reward law by explicit maximal-path enumeration; truncated paths become tail mass."""
    m = getattr(m, "mdp", m)
    mass: dict = {}
    tail = Fraction(0)
    for count, (_path, prob, rew) in enumerate(iter_paths(m, sched, max_len), start=1):
        if count > max_paths:
            raise OracleBudgetError(f"more than {max_paths} maximal paths")
        if rew is None:
            tail += prob
        else:
            mass[rew] = mass.get(rew, Fraction(0)) + prob
    return RewardDistribution.from_mapping(mass, tail)


# ---------------------------------------------------------------------------
# Measures, computed straight from the definitions


def oracle_measures(d: RewardDistribution | Mapping) -> dict[str, Fraction]:
    atoms = d.atoms if isinstance(d, RewardDistribution) else tuple(d.items())
    e = sum(Fraction(v) * p for v, p in atoms)
    second = sum(Fraction(v) ** 2 * p for v, p in atoms)
    return {
        "E": e,
        "V": second - e * e,
        "MAD": sum(p * abs(v - e) for v, p in atoms),
        "SMAD": sum(p * max(Fraction(0), e - v) for v, p in atoms),
        "SV": sum(p * min(Fraction(0), v - e) ** 2 for v, p in atoms),
    }


def oracle_objective(d, kind: str, lam: Number, t: Number | None = None) -> Fraction:
    meas = oracle_measures(d)
    lam = Fraction(lam)
    if kind == "tbpe":
        atoms = d.atoms if isinstance(d, RewardDistribution) else tuple(d.items())
        return sum(p * (v - lam * max(Fraction(0), Fraction(t) - v)) for v, p in atoms)
    pen = {"vpe": "V", "madpe": "MAD", "smadpe": "SMAD", "svpe": "SV"}[kind]
    return meas["E"] - lam * meas[pen]


def _emax_acyclic(m: Mdp) -> tuple[dict[str, Fraction], dict[str, str]]:
    """E^max by plain recursion on an acyclic model (ties to the smallest action)."""
    val: dict[str, Fraction] = {}
    pol: dict[str, str] = {}

    def go(s: str, depth: int = 0) -> Fraction:
        if s in val:
            return val[s]
        if depth > len(m.states):
            raise ValueError("the oracle's E^max recursion needs an acyclic model")
        if m.is_trap(s):
            val[s] = Fraction(0)
            return val[s]
        best = None
        for a in m.enabled(s):
            q = m.reward[(s, a)] + sum(p * go(t, depth + 1) for t, p in m.trans[(s, a)])
            if best is None or q > best:
                best, pol[s] = q, a
        val[s] = best
        return best

    for s in m.states:
        go(s)
    return val, pol


def reachable_pairs(m: Mdp, bound: int | None = None) -> list[tuple[str, int]]:
    """(state, accumulated reward) pairs reachable under some scheduler, w <= bound."""
    seen = {(m.initial, 0)}
    todo = [(m.initial, 0)]
    while todo:
        s, w = todo.pop()
        for a in m.enabled(s):
            v = w + m.reward[(s, a)]
            if bound is not None and v > bound:
                continue
            for t, _ in m.trans[(s, a)]:
                if (t, v) not in seen:
                    if len(seen) > 1_000_000:
                        raise OracleBudgetError("too many reachable (state, reward) pairs")
                    seen.add((t, v))
                    todo.append((t, v))
    return sorted(seen, key=lambda p: (p[1], p[0]))


def best_deterministic_reward_based(m: Mdp, kind: str, lam: Number, t: Number | None = None, budget: int = 100_000):
    """Exhaustive search over deterministic reward-based schedulers of an acyclic model."""
    m = getattr(m, "mdp", m)
    pairs = [p for p in reachable_pairs(m) if len(m.enabled(p[0])) > 1]
    fixed = MemorylessRandomized({s: {m.enabled(s)[0]: 1} for s in m.states if not m.is_trap(s)})
    total = math.prod(len(m.enabled(s)) for s, _ in pairs)
    if total > budget:
        raise OracleBudgetError(f"{total} deterministic schedulers exceed the budget {budget}")
    best = None
    for combo in itertools.product(*(m.enabled(s) for s, _ in pairs)):
        table = {p: {a: 1} for p, a in zip(pairs, combo)}
        sched = RewardBasedRandomized(table, fixed)
        val = oracle_objective(enumerate_paths(m, sched), kind, lam, t)
        if best is None or val > best[0]:
            best = (val, sched)
    return best


def all_memoryless_deterministic(m: Mdp) -> Iterator[MemorylessRandomized]:
    m = getattr(m, "mdp", m)
    states = [s for s in m.states if not m.is_trap(s)]
    for combo in itertools.product(*(m.enabled(s) for s in states)):
        yield MemorylessRandomized({s: {a: 1} for s, a in zip(states, combo)})


# ---------------------------------------------------------------------------
# Grid search


MEMORYLESS = "memoryless"
REWARD_BASED = "reward-based"


@dataclass(frozen=True)
class GridSpec:
    resolution: int
    objective: str  # vpe | madpe | smadpe | svpe | tbpe
    lam: Fraction
    t: Fraction | None = None
    scheduler_class: str = MEMORYLESS
    bound: int = 0
    budget: int = 50_000_000
    exact_limit: int = 20_000
    keep_surface: bool = False

    def __post_init__(self) -> None:
        if self.resolution < 1:
            raise ValueError("grid resolution must be at least 1")
        if self.scheduler_class not in (MEMORYLESS, REWARD_BASED):
            raise ValueError(f"unknown scheduler class {self.scheduler_class!r}")
        if self.bound < 0:
            raise ValueError("reward bound must be non-negative")
        object.__setattr__(self, "lam", Fraction(self.lam))
        if self.t is not None:
            object.__setattr__(self, "t", Fraction(self.t))


@dataclass
class GridResult:
    value: Fraction
    probabilities: tuple[tuple[Fraction, ...], ...]
    scheduler: Scheduler
    decisions: list
    points: int
    mode: str
    surface: list[tuple[tuple[tuple[Fraction, ...], ...], Fraction | float]] = field(default_factory=list)


def compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """All tuples of ``parts`` non-negative ints summing to ``total``, lexicographically."""
    if parts == 1:
        return [(total,)]
    return [(i, *rest) for i in range(total + 1) for rest in compositions(total - i, parts - 1)]


def _decisions(m: Mdp, spec: GridSpec) -> list:
    if spec.scheduler_class == MEMORYLESS:
        reach = m.reachable()
        return [s for s in m.states if s in reach and len(m.enabled(s)) > 1]
    return [p for p in reachable_pairs(m, spec.bound) if len(m.enabled(p[0])) > 1]


def _make_scheduler(m: Mdp, spec: GridSpec, decisions, probs, default: MemorylessRandomized) -> Scheduler:
    dists = []
    for d, pr in zip(decisions, probs):
        s = d if spec.scheduler_class == MEMORYLESS else d[0]
        dists.append({a: p for a, p in zip(m.enabled(s), pr) if p})
    if spec.scheduler_class == MEMORYLESS:
        choice = dict(default.choice)
        choice.update(zip(decisions, dists))
        return MemorylessRandomized(choice)
    return RewardBasedRandomized(dict(zip(decisions, dists)), default, spec.bound)


def grid_search(m: Mdp, spec: GridSpec) -> GridResult:
    """Best objective over schedulers whose decision probabilities are multiples of 1/G.

    Small grids are evaluated exactly point by point; larger ones with a
    vectorized float DP whose best candidates are then re-evaluated exactly.
    Ties go to the lexicographically smallest probability vector.
    """
    m = getattr(m, "mdp", m)
    g = spec.resolution
    decisions = _decisions(m, spec)
    if spec.scheduler_class == MEMORYLESS:
        default = MemorylessRandomized({s: {m.enabled(s)[0]: 1} for s in m.states if not m.is_trap(s)})
    else:
        _, pol = _emax_acyclic(m)
        default = MemorylessRandomized.deterministic(pol)
    axes = []
    for d in decisions:
        s = d if spec.scheduler_class == MEMORYLESS else d[0]
        axes.append([tuple(Fraction(c, g) for c in comp) for comp in compositions(g, len(m.enabled(s)))])
    points = math.prod(len(a) for a in axes)
    if points > spec.budget:
        raise OracleBudgetError(f"{points} grid points exceed the budget {spec.budget}")

    def exact_value(probs) -> Fraction:
        sched = _make_scheduler(m, spec, decisions, probs, default)
        return oracle_objective(enumerate_paths(m, sched), spec.objective, spec.lam, spec.t)

    surface = []
    if points <= spec.exact_limit:
        best = None
        for probs in itertools.product(*axes):
            val = exact_value(probs)
            if spec.keep_surface:
                surface.append((probs, val))
            if best is None or val > best[0]:
                best = (val, probs)
        mode = "exact"
    else:
        values = _float_surface(m, spec, decisions, axes, default)
        top = np.max(values)
        tol = 1e-9 * max(1.0, abs(top))
        flat = np.flatnonzero(values.ravel() >= top - tol)[:200]
        best = None
        for idx in flat:
            probs = tuple(ax[i] for ax, i in zip(axes, np.unravel_index(idx, values.shape)))
            val = exact_value(probs)
            if best is None or val > best[0]:
                best = (val, probs)
        if spec.keep_surface:
            for idx in range(values.size):
                probs = tuple(ax[i] for ax, i in zip(axes, np.unravel_index(idx, values.shape)))
                surface.append((probs, float(values.ravel()[idx])))
        mode = "float+exact"
    val, probs = best
    sched = _make_scheduler(m, spec, decisions, probs, default)
    return GridResult(val, probs, sched, decisions, points, mode, surface)


def _float_surface(m: Mdp, spec: GridSpec, decisions, axes, default: MemorylessRandomized) -> np.ndarray:
    """Objective at every grid point by a forward DP over (state, reward) with numpy broadcasting."""
    shape = tuple(len(a) for a in axes)
    nd = len(axes)
    index = {d: i for i, d in enumerate(decisions)}
    prob_arrays = []
    for i, (d, ax) in enumerate(zip(decisions, axes)):
        s = d if spec.scheduler_class == MEMORYLESS else d[0]
        per_action = {}
        for j, a in enumerate(m.enabled(s)):
            arr = np.array([float(pr[j]) for pr in ax])
            view = [1] * nd
            view[i] = len(ax)
            per_action[a] = arr.reshape(view)
        prob_arrays.append(per_action)

    def dist_at(s: str, w) -> dict:
        key = s if spec.scheduler_class == MEMORYLESS else (s, w)
        i = index.get(key)
        if i is not None:
            return prob_arrays[i]
        return {a: float(q) for a, q in default.choice[s].items()}

    rank = _topological_rank(m)
    mass: dict[tuple[str, Fraction], object] = {(m.initial, 0): 1.0}
    heap = [(0, rank[m.initial], m.initial)]
    atoms: dict = {}
    # (reward, topological rank) order visits every node after all its predecessors
    while heap:
        w, _r, s = heapq.heappop(heap)
        here = mass.pop((s, w))
        if m.is_trap(s):
            atoms[w] = atoms.get(w, 0.0) + here
            continue
        for a, q in dist_at(s, w).items():
            r = m.reward[(s, a)]
            for t, p in m.trans[(s, a)]:
                k2 = (t, w + r)
                if k2 not in mass:
                    mass[k2] = 0.0
                    heapq.heappush(heap, (w + r, rank[t], t))
                mass[k2] = mass[k2] + here * q * float(p)
    vals = sorted(atoms)
    probs = [np.broadcast_to(np.asarray(atoms[v], dtype=float), shape) for v in vals]
    x = np.array([float(v) for v in vals]).reshape((-1,) + (1,) * nd)
    pm = np.stack(probs) if probs else np.zeros((0,) + shape)
    e = (pm * x).sum(axis=0)
    lam = float(spec.lam)
    if spec.objective == "tbpe":
        return e - lam * (pm * np.maximum(float(spec.t) - x, 0.0)).sum(axis=0)
    dev = x - e
    pen = {
        "vpe": lambda: (pm * dev**2).sum(axis=0),
        "madpe": lambda: (pm * np.abs(dev)).sum(axis=0),
        "smadpe": lambda: (pm * np.maximum(-dev, 0.0)).sum(axis=0),
        "svpe": lambda: (pm * np.minimum(dev, 0.0) ** 2).sum(axis=0),
    }[spec.objective]()
    return e - lam * pen


def _topological_rank(m: Mdp) -> dict[str, int]:
    """Position of each state in a topological order; cyclic models are refused."""
    indeg = {s: 0 for s in m.states}
    for succ in m.trans.values():
        for t, _ in succ:
            indeg[t] += 1
    order, ready = [], sorted(s for s, d in indeg.items() if d == 0)
    while ready:
        s = ready.pop()
        order.append(s)
        for a in m.enabled(s):
            for t, _ in m.trans[(s, a)]:
                indeg[t] -= 1
                if indeg[t] == 0:
                    ready.append(t)
    if len(order) != len(m.states):
        raise ValueError("the float grid needs an acyclic model")
    return {s: i for i, s in enumerate(order)}


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class SimReport:
    n: int
    seed: int
    mean: float = math.nan
    mad: float = math.nan
    smad: float = math.nan
    semivariance: float = math.nan
    variance: float = math.nan
    se_mean: float = math.nan
    se_mad: float = math.nan
    histogram: dict = field(default_factory=dict)
    resampled: int = 0

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "mean": self.mean,
            "mad": self.mad,
            "smad": self.smad,
            "semivariance": self.semivariance,
            "variance": self.variance,
            "se_mean": self.se_mean,
            "se_mad": self.se_mad,
            "resampled": self.resampled,
            "histogram": [[str(k), v] for k, v in sorted(self.histogram.items())],
        }


class _Sampler:
    """Vectorized path sampling: paths sharing (state, reward, memory) are advanced together."""

    def __init__(self, m: Mdp, sched: Scheduler, max_steps: int):
        self.m = m
        self.sched = sched
        self.max_steps = max_steps
        self.states = list(m.states)
        self.idx = {s: i for i, s in enumerate(self.states)}
        self.trap = np.array([m.is_trap(s) for s in self.states])
        self._succ = {}
        for (s, a), succ in m.trans.items():
            targets = np.array([self.idx[t] for t, _ in succ])
            cum = np.cumsum([float(p) for _, p in succ])
            cum[-1] = 1.0
            self._succ[(s, a)] = (targets, cum, float(m.reward[(s, a)]))
        self._decide_cache: dict = {}

    def _decide(self, s: str, w: float, mem):
        key = (s, w, mem)
        got = self._decide_cache.get(key)
        if got is None:
            wk = int(w) if float(w).is_integer() else Fraction(w)
            dist = self.sched.decide(s, wk, mem)
            acts = list(dist)
            cum = np.cumsum([float(dist[a]) for a in acts])
            cum[-1] = 1.0
            got = (acts, cum)
            self._decide_cache[key] = got
        return got

    def run(self, count: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """Sample ``count`` total rewards; returns (rewards, number of unfinished paths)."""
        state = np.full(count, self.idx[self.m.initial])
        acc = np.zeros(count)
        # memory values are interned; ``memo`` holds their ids
        memo = np.zeros(count, dtype=np.int64)
        mem_ids: dict = {self.sched.initial_memory: 0}
        mem_vals = [self.sched.initial_memory]
        active = ~self.trap[state]
        for _ in range(self.max_steps):
            if not active.any():
                break
            act_idx = np.flatnonzero(active)
            keys = np.stack([state[act_idx].astype(float), acc[act_idx], memo[act_idx].astype(float)], axis=1)
            uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            u_act = rng.random(len(act_idx))
            u_succ = rng.random(len(act_idx))
            for g, (si, w, mi) in enumerate(uniq):
                sel = act_idx[inverse == g]
                if sel.size == 0:
                    continue
                s = self.states[int(si)]
                memory = mem_vals[int(mi)]
                acts, cum = self._decide(s, float(w), memory)
                choice = np.searchsorted(cum, u_act[inverse == g], side="right")
                choice = np.minimum(choice, len(acts) - 1)
                u_s = u_succ[inverse == g]
                for ai, a in enumerate(acts):
                    sub = sel[choice == ai]
                    if sub.size == 0:
                        continue
                    targets, scum, r = self._succ[(s, a)]
                    pick = np.minimum(np.searchsorted(scum, u_s[choice == ai], side="right"), len(targets) - 1)
                    nxt = targets[pick]
                    new_acc = w + r
                    acc[sub] = new_acc
                    wk = int(new_acc) if float(new_acc).is_integer() else Fraction(new_acc)
                    for t_idx in np.unique(nxt):
                        t = self.states[int(t_idx)]
                        new_mem = self.sched.update(s, a, t, memory, wk)
                        mid = mem_ids.get(new_mem)
                        if mid is None:
                            mid = mem_ids[new_mem] = len(mem_vals)
                            mem_vals.append(new_mem)
                        memo[sub[nxt == t_idx]] = mid
                    state[sub] = nxt
            active = ~self.trap[state]
        return acc[~active], int(active.sum())


def _run_batch(args) -> tuple[np.ndarray, int]:
    m, sched, seed, index, size, max_steps, retries = args
    rng = np.random.Generator(np.random.Philox(key=seed).jumped(index))
    sampler = _Sampler(m, sched, max_steps)
    out, missing = sampler.run(size, rng)
    parts, resampled = [out], 0
    for _ in range(retries):
        if not missing:
            break
        resampled += missing
        more, missing = sampler.run(missing, rng)
        parts.append(more)
    if missing:
        raise OracleBudgetError(f"{missing} paths exceeded {max_steps} steps after {retries} retries")
    return np.concatenate(parts), resampled


def simulate(
    m: Mdp,
    sched: Scheduler,
    n: int,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    max_steps: int = 100_000,
    retries: int = 3,
    jobs: int = 1,
) -> SimReport:
    m = getattr(m, "mdp", m)
    if n < 0:
        raise ValueError("sample count must be non-negative")
    if n == 0:
        return SimReport(0, seed)
    sizes = [min(batch_size, n - i) for i in range(0, n, batch_size)]
    tasks = [(m, sched, seed, i, size, max_steps, retries) for i, size in enumerate(sizes)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_batch, tasks))
    else:
        results = [_run_batch(t) for t in tasks]
    x = np.concatenate([r[0] for r in results])
    resampled = sum(r[1] for r in results)
    mean = float(x.mean())
    dev = x - mean
    absdev = np.abs(dev)
    below = np.minimum(dev, 0.0)
    values, counts = np.unique(x, return_counts=True)
    hist = {(int(v) if float(v).is_integer() else float(v)): c / n for v, c in zip(values, counts)}
    return SimReport(
        n,
        seed,
        mean,
        float(absdev.mean()),
        float(np.maximum(-dev, 0.0).mean()),
        float((below**2).mean()),
        float((dev**2).mean()),
        float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
        float(absdev.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
        hist,
        resampled,
    )


def total_variation(hist: Mapping, d: RewardDistribution) -> float:
    exact = {Fraction(v): float(p) for v, p in d.atoms}
    emp = {Fraction(v): p for v, p in hist.items()}
    keys = set(exact) | set(emp)
    return 0.5 * sum(abs(exact.get(k, 0.0) - emp.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# LP by vertex enumeration


def _solve_square(rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> list[Fraction] | None:
    n = len(rows)
    a = [list(r) + [b] for r, b in zip(rows, rhs)]
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c] != 0), None)
        if piv is None:
            return None
        a[c], a[piv] = a[piv], a[c]
        for i in range(n):
            if i != c and a[i][c] != 0:
                f = a[i][c] / a[c][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return [a[i][n] / a[i][i] for i in range(n)]


def vertex_lp_oracle(p) -> Fraction | None:
    """Optimal value of a bounded LP by trying every set of n tight constraints; None if infeasible.

    Only supports variables with finite lower bounds; upper bounds become rows.
    """
    names = list(p.variables)
    n = len(names)
    if any(p.lower[v] is None for v in names):
        raise ValueError("vertex oracle needs finite lower bounds")
    rows: list[tuple[list[Fraction], str, Fraction]] = []
    for c in p.constraints:
        rows.append(([c.coeffs.get(v, Fraction(0)) for v in names], c.rel, c.rhs))
    for i, v in enumerate(names):
        unit = [Fraction(int(j == i)) for j in range(n)]
        rows.append((unit, ">=", p.lower[v]))
        if v in p.upper:
            rows.append((unit, "<=", p.upper[v]))
    eq = [r for r in rows if r[1] == "="]
    ineq = [r for r in rows if r[1] != "="]
    best = None
    for extra in itertools.combinations(range(len(ineq)), max(0, n - len(eq))):
        chosen = eq + [ineq[i] for i in extra]
        if len(chosen) != n:
            continue
        x = _solve_square([r[0] for r in chosen], [r[2] for r in chosen])
        if x is None:
            continue
        ok = True
        for coeffs, rel, b in rows:
            lhs = sum(a * xv for a, xv in zip(coeffs, x))
            if (rel == "<=" and lhs > b) or (rel == ">=" and lhs < b) or (rel == "=" and lhs != b):
                ok = False
                break
        if not ok:
            continue
        val = p.objective_constant + sum(p.objective.get(v, Fraction(0)) * xv for v, xv in zip(names, x))
        if best is None or val > best:
            best = val
    return best

