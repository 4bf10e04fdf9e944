"""MAD-penalized expectation: the reward-counter unfolding N, its frequency LP and QP, and a sweep solver.

For a fixed expectation e the absolute values in the objective are constants,
so maximizing E - lambda * MAD over schedulers with E = e is a linear program
over expected frequencies.  The solver sweeps e, then "polishes" the best
candidates: inside a fixed LP basis the frequencies are affine in e and the
objective is a quadratic in e, which is maximized exactly over the interval
where the basis stays feasible.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .expect import max_expected_reward, visit_frequencies
from .lp import INFEASIBLE, LpProblem, LpSolution, parse_lp, solve_lp, write_lp
from .model import (
    CHAIN_ACTION,
    Mdp,
    MemorylessRandomized,
    Number,
    RewardBasedRandomized,
    Scheduler,
    SchedulerError,
    fmt,
    induce_chain,
    parse_rational,
)
from .preprocess import NormalizedMdp, normalize

TAU = CHAIN_ACTION
GOAL_PRIME = "goal'"
LAMBDA_MAX = Fraction(1, 2)


class MadpeRefusal(ValueError):
    """lambda outside (0, 1/2]: the reward-bounded scheduler shape is no longer optimal."""


def check_lambda(lam: Number) -> Fraction:
    lam = Fraction(lam)
    if lam <= 0:
        raise MadpeRefusal(f"lambda must be positive, got {fmt(lam)}")
    if lam > LAMBDA_MAX:
        raise MadpeRefusal(
            f"lambda = {fmt(lam)} > 1/2: optimal MADPE schedulers may have to minimize the expected "
            "reward once enough reward is collected (ERMin behaviour, e.g. the looping model with a "
            "final alpha/beta choice), so the unfolding-based solver does not apply. "
            "Use 'oracle grid' to explore such instances."
        )
    return lam


def pair_name(s: str, w: int) -> str:
    return f"{s}@{w}"


@dataclass(frozen=True, eq=False)
class UnfoldedN:
    """The MDP N over S x {0..k+ell-1} plus ``goal'``; rewards only on the final tau step."""

    mdp: Mdp
    base: Mdp
    k: int
    ell: int
    emax_table: Mapping[str, Fraction]
    policy: Mapping[str, str]
    pair_of: Mapping[str, tuple[str, int]]
    node_of: Mapping[tuple[str, int], str]

    @property
    def goal(self) -> str:
        return self.base.goal  # type: ignore[return-value]

    def terminal(self, s: str, w: int) -> bool:
        return s == self.goal or w >= self.k

    def terminal_reward(self, s: str, w: int) -> Fraction:
        return Fraction(w) if s == self.goal else w + self.emax_table[s]

    def pairs(self, reachable_only: bool = False) -> list[tuple[str, int]]:
        """Non-trap pairs; the initial pair first, then by (w, state)."""
        if reachable_only:
            names = self.mdp.reachable()
            pairs = [self.pair_of[n] for n in names if n != GOAL_PRIME]
        else:
            pairs = list(self.node_of)
        init = (self.base.initial, 0)
        rest = sorted((p for p in pairs if p != init), key=lambda p: (p[1], p[0]))
        return [init, *rest]

    def actions(self, s: str, w: int) -> tuple[str, ...]:
        return self.mdp.enabled(self.node_of[(s, w)])


def build_unfolding_n(m) -> UnfoldedN:
    nm = normalize(m) if not isinstance(m, NormalizedMdp) else m
    base = nm.mdp
    table = max_expected_reward(base)
    emax = table.values[base.initial]
    k = math.ceil(emax)
    ell = int(base.max_reward)
    top = k + ell
    goal = base.goal
    node_of = {(s, w): pair_name(s, w) for s in base.states for w in range(top)}
    pair_of = {v: p for p, v in node_of.items()}
    actions: dict[str, dict[str, tuple[Number, dict[str, Fraction]]]] = {}
    for (s, w), name in node_of.items():
        if s == goal or w >= k:
            r = Fraction(w) if s == goal else w + table.values[s]
            actions[name] = {TAU: (r, {GOAL_PRIME: Fraction(1)})}
            continue
        acts = {}
        for a in base.enabled(s):
            v = w + base.reward[(s, a)]
            acts[a] = (0, {node_of[(t, v)]: p for t, p in base.trans[(s, a)]})
        actions[name] = acts
    n = Mdp.build(set(node_of.values()) | {GOAL_PRIME}, node_of[(base.initial, 0)], GOAL_PRIME, actions)
    return UnfoldedN(n, base, k, ell, dict(table.values), dict(table.policy), pair_of, node_of)


# ---------------------------------------------------------------------------
# Frequency constraints and QP


def x_name(s: str, w: int, a: str) -> str:
    return f"x_{s}_{w}_{a}"


def build_frequency_constraints(n: UnfoldedN, reachable_only: bool = False) -> LpProblem:
    """Non-negative frequencies x_{s,w,a} with flow balance at every pair."""
    p = LpProblem()
    pairs = n.pairs(reachable_only)
    keep = set(pairs)
    for s, w in pairs:
        for a in n.actions(s, w):
            p.add_variable(x_name(s, w, a))
    inflow: dict[tuple[str, int], dict[str, Fraction]] = {pr: {} for pr in pairs}
    for s, w in pairs:
        for a in n.actions(s, w):
            for t, q in n.mdp.trans[(n.node_of[(s, w)], a)]:
                if t == GOAL_PRIME:
                    continue
                tgt = n.pair_of[t]
                if tgt in keep:
                    row = inflow[tgt]
                    var = x_name(s, w, a)
                    row[var] = row.get(var, Fraction(0)) - q
    init = (n.base.initial, 0)
    for s, w in pairs:
        row = dict(inflow[(s, w)])
        for a in n.actions(s, w):
            var = x_name(s, w, a)
            row[var] = row.get(var, Fraction(0)) + 1
        p.add_constraint(row, "=", 1 if (s, w) == init else 0, f"flow_{s}_{w}")
    return p


def terminal_terms(n: UnfoldedN, p: LpProblem) -> dict[str, Fraction]:
    """x-variable of every terminal tau step in ``p`` mapped to its reward."""
    out = {}
    for s, w in n.pairs():
        if n.terminal(s, w):
            var = x_name(s, w, TAU)
            if var in p.lower:
                out[var] = n.terminal_reward(s, w)
    return out


@dataclass(eq=False)
class QpModel:
    """The linear frequency constraints in ``lp`` plus the bilinear objective terms."""

    lp: LpProblem
    quadratic: list[tuple[Fraction, str, str]]
    lam: Fraction
    k: int
    ell: int
    model_hash: str

    def header(self) -> str:
        return f"lambda={fmt(self.lam)} k={self.k} ell={self.ell} model={self.model_hash}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QpModel):
            return NotImplemented
        return (
            self.lp == other.lp
            and sorted(self.quadratic) == sorted(other.quadratic)
            and (self.lam, self.k, self.ell, self.model_hash) == (other.lam, other.k, other.ell, other.model_hash)
        )

    def objective_value(self, x: Mapping[str, Fraction]) -> Fraction:
        return self.lp.value(x) + sum((c * x[a] * x[b] for c, a, b in self.quadratic), Fraction(0))


def build_qp(n: UnfoldedN, lam: Number) -> QpModel:
    lam = check_lambda(lam)
    p = build_frequency_constraints(n)
    terms = terminal_terms(n, p)
    p.add_variable("e")
    quad = []
    aux = []
    for s, w in n.pairs():
        if not n.terminal(s, w):
            continue
        var = x_name(s, w, TAU)
        v = terms[var]
        name = f"g_{w}" if s == n.goal and w < n.k else f"h_{s}_{w}"
        aux.append((name, v))
        quad.append((-lam, var, name))
    row = {var: -v for var, v in terms.items()}
    row["e"] = Fraction(1)
    p.add_constraint(row, "=", 0, "mean")
    for name, v in aux:
        p.add_variable(name)
    for name, v in aux:
        p.add_constraint({name: 1, "e": 1}, ">=", v, f"abs_{name}_up")
        p.add_constraint({name: 1, "e": -1}, ">=", -v, f"abs_{name}_dn")
    p.set_objective({"e": 1})
    return QpModel(p, quad, lam, n.k, n.ell, n.base.digest())


def export_qp(q: QpModel, sink=None) -> str:
    text = write_lp(q.lp, q.header(), q.quadratic)
    if sink is not None:
        sink.write(text)
    return text


def parse_qp(text: str) -> QpModel:
    p, quad, header = parse_lp(text)
    fields = dict(tok.split("=", 1) for tok in header.split() if "=" in tok)
    try:
        return QpModel(p, quad, parse_rational(fields["lambda"]), int(fields["k"]), int(fields["ell"]), fields["model"])
    except KeyError as exc:
        raise ValueError(f"QP header lacks {exc.args[0]!r}") from None


# ---------------------------------------------------------------------------
# Schedulers and frequencies


def extract_scheduler(n: UnfoldedN, x: Mapping[str, Fraction]) -> RewardBasedRandomized:
    """Normalize frequencies per pair below k; zero-frequency pairs and rewards >= k follow T."""
    table = {}
    for s, w in n.pairs():
        if n.terminal(s, w):
            continue
        acts = n.actions(s, w)
        vals = {a: Fraction(x.get(x_name(s, w, a), 0)) for a in acts}
        if any(v < 0 for v in vals.values()):
            raise SchedulerError(f"negative frequency at ({s}, {w})")
        total = sum(vals.values(), Fraction(0))
        if total == 0:
            continue
        table[(s, w)] = {a: v / total for a, v in vals.items() if v}
    default = MemorylessRandomized.deterministic(n.policy)
    return RewardBasedRandomized(table, default, n.k - 1)


def upgrade(sched: Scheduler, n: UnfoldedN) -> RewardBasedRandomized:
    """S up-arrow_k T: follow ``sched`` (a reward-based scheduler) below k and T from k on."""
    if isinstance(sched, MemorylessRandomized):
        table = {
            (s, w): sched.decide(s) for s in n.base.states if not n.base.is_trap(s) for w in range(n.k)
        }
    elif isinstance(sched, RewardBasedRandomized):
        table = {}
        for s in n.base.states:
            if n.base.is_trap(s):
                continue
            for w in range(n.k):
                table[(s, w)] = sched.decide(s, w)
    else:
        raise TypeError("only memoryless and reward-based schedulers can be upgraded")
    return RewardBasedRandomized(table, MemorylessRandomized.deterministic(n.policy), n.k - 1)


def n_scheduler(n: UnfoldedN, sched: Scheduler) -> MemorylessRandomized:
    """The memoryless scheduler on N that plays ``sched`` at pairs below k."""
    choice = {}
    for (s, w), name in n.node_of.items():
        if n.terminal(s, w):
            choice[name] = {TAU: Fraction(1)}
        else:
            choice[name] = sched.decide(s, w, None)
    return MemorylessRandomized(choice)


def frequencies(n: UnfoldedN, sched: Scheduler) -> dict[str, Fraction]:
    """Expected frequencies x_{s,w,a} of a reward-based scheduler in N."""
    ns = n_scheduler(n, sched)
    c = induce_chain(n.mdp, ns)
    visits = visit_frequencies(c)
    out = {}
    for s, w in n.pairs():
        name = n.node_of[(s, w)]
        vis = visits.get(name, Fraction(0))
        for a in n.actions(s, w):
            out[x_name(s, w, a)] = vis * ns.choice[name].get(a, Fraction(0))
    return out


def madpe_from_frequencies(n: UnfoldedN, x: Mapping[str, Fraction], lam: Number) -> tuple[Fraction, Fraction, Fraction]:
    """(E, MAD, MADPE) of the terminal-reward law encoded by frequencies on N."""
    lam = Fraction(lam)
    atoms = []
    for s, w in n.pairs():
        if n.terminal(s, w):
            q = Fraction(x.get(x_name(s, w, TAU), 0))
            if q:
                atoms.append((n.terminal_reward(s, w), q))
    e = sum((v * q for v, q in atoms), Fraction(0))
    mad = sum((q * abs(v - e) for v, q in atoms), Fraction(0))
    return e, mad, e - lam * mad


def madpe_in_n(n: UnfoldedN, sched: Scheduler, lam: Number) -> Fraction:
    return madpe_from_frequencies(n, frequencies(n, sched), lam)[2]


# ---------------------------------------------------------------------------
# Sweep solver


@dataclass(frozen=True)
class SweepConfig:
    delta: Fraction | None = None  # grid step; default E^max / 64
    refine_rounds: int = 3
    polish: bool = True
    polish_top: int = 8
    jobs: int = 1


@dataclass(frozen=True)
class MadpeSolution:
    value: Fraction
    e_star: Fraction
    mad: Fraction
    frequencies: Mapping[str, Fraction]
    scheduler: RewardBasedRandomized
    sweep_log: list[tuple[Fraction, Fraction | None]]
    gap_bound: Fraction
    k: int
    ell: int
    lp_solves: int = 0
    polished: bool = False


@dataclass
class _PinnedLp:
    base: LpProblem
    terms: dict[str, Fraction]
    lam: Fraction

    def solve(self, e_bar: Fraction) -> LpSolution:
        p = self.base.copy()
        p.constraints = list(p.constraints)
        p.add_constraint(self.terms, "=", e_bar, "mean")
        p.set_objective({v: -self.lam * abs(r - e_bar) for v, r in self.terms.items()}, e_bar)
        return solve_lp(p)


def _solve_candidate(args) -> tuple[Fraction, LpSolution]:
    pinned, e_bar = args
    return e_bar, pinned.solve(e_bar)


def _solve_linear(rows: list[dict[str, Fraction]], rhs: list[tuple[Fraction, Fraction]], cols: list[str]):
    """Solve rows . x = r0 + e * r1 for x affine in e.

    Returns ({col: (u, d)}, e-constraint) where x = u + e d; the constraint is
    None or a fixed value of e forced by a dependent row.
    """
    mat = [[row.get(c, Fraction(0)) for c in cols] + [r0, r1] for row, (r0, r1) in zip(rows, rhs)]
    n = len(cols)
    where = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(mat)) if mat[i][c] != 0), None)
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        inv = 1 / mat[r][c]
        mat[r] = [v * inv for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        where.append(c)
        r += 1
    fixed = None
    for i in range(r, len(mat)):
        c0, c1 = mat[i][n], mat[i][n + 1]
        if c1 != 0:
            val = -c0 / c1
            if fixed is not None and fixed != val:
                return None, None
            fixed = val
        elif c0 != 0:
            return None, None
    sol = {c: (Fraction(0), Fraction(0)) for c in cols}
    for i, c in enumerate(where):
        sol[cols[c]] = (mat[i][n], mat[i][n + 1])
    return sol, fixed


def _polish(pinned: _PinnedLp, sol: LpSolution, e0: Fraction, kinks: list[Fraction]):
    """Best feasible (e, x) reachable by moving e while keeping ``sol``'s basis."""
    basic = [v for v in sol.basis if v in pinned.base.lower]
    rows = [dict(c.coeffs) for c in pinned.base.constraints] + [dict(pinned.terms)]
    rhs = [(c.rhs, Fraction(0)) for c in pinned.base.constraints] + [(Fraction(0), Fraction(1))]
    affine, fixed = _solve_linear(rows, rhs, basic)
    if affine is None:
        return None
    lo, hi = None, None
    if fixed is not None:
        lo = hi = fixed
    for u, d in affine.values():
        # u + e d >= 0
        if d > 0:
            b = -u / d
            lo = b if lo is None or b > lo else lo
        elif d < 0:
            b = -u / d
            hi = b if hi is None or b < hi else hi
        elif u < 0:
            return None
    lo = Fraction(0) if lo is None else max(lo, Fraction(0))
    if hi is None:
        hi = max(kinks) if kinks else e0
    if lo > hi:
        return None
    best = None
    points = sorted({lo, hi, *(kv for kv in kinks if lo <= kv <= hi)})
    lam = pinned.lam
    for a, b in zip(points, points[1:] + [points[-1]]) if len(points) > 1 else [(points[0], points[0])]:
        mid = (a + b) / 2
        # objective on [a, b]: e - lam * sum sgn (r - e) (u + e d), a quadratic c0 + c1 e + c2 e^2
        c0, c1, c2 = Fraction(0), Fraction(1), Fraction(0)
        for var, r in pinned.terms.items():
            u, d = affine.get(var, (Fraction(0), Fraction(0)))
            sgn = 1 if r > mid else (-1 if r < mid else 0)
            if not sgn:
                continue
            # sgn * (r - e)(u + e d) = sgn * (r u + e (r d - u) - e^2 d)
            c0 -= lam * sgn * r * u
            c1 -= lam * sgn * (r * d - u)
            c2 += lam * sgn * d
        cands = [a, b]
        if c2 < 0:
            vert = -c1 / (2 * c2)
            if a < vert < b:
                cands.append(vert)
        for e in cands:
            val = c0 + c1 * e + c2 * e * e
            if best is None or val > best[0] or (val == best[0] and e < best[1]):
                best = (val, e)
    val, e = best
    x = {v: Fraction(0) for v in pinned.base.variables}
    for var, (u, d) in affine.items():
        x[var] = u + e * d
    return val, e, x


def solve_madpe_sweep(m, lam: Number, cfg: SweepConfig | None = None) -> MadpeSolution:
    lam = check_lambda(lam)
    cfg = cfg or SweepConfig()
    n = build_unfolding_n(m)
    emax = n.emax_table[n.base.initial]
    base = build_frequency_constraints(n, reachable_only=True)
    terms = terminal_terms(n, base)
    pinned = _PinnedLp(base, terms, lam)
    kinks = sorted(set(terms.values()))
    delta = Fraction(cfg.delta) if cfg.delta is not None else (emax / 64 if emax else Fraction(1))
    if delta <= 0:
        raise ValueError("sweep step must be positive")

    results: dict[Fraction, LpSolution] = {}

    def run(points) -> None:
        todo = sorted({Fraction(p) for p in points if 0 <= p <= emax} - set(results))
        if cfg.jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(cfg.jobs) as pool:
                for e_bar, sol in pool.map(_solve_candidate, [(pinned, e) for e in todo]):
                    results[e_bar] = sol
        else:
            for e_bar in todo:
                results[e_bar] = pinned.solve(e_bar)

    def incumbent() -> Fraction:
        feas = [(sol.objective, -e) for e, sol in results.items() if sol.status != INFEASIBLE]
        return -max(feas)[1]

    steps = int(emax / delta)
    run([*kinks, *(i * delta for i in range(steps + 1)), emax])
    step = delta
    for _ in range(cfg.refine_rounds):
        step /= 2
        e0 = incumbent()
        run([e0 - step, e0 + step])

    log = sorted((e, sol.objective if sol.status != INFEASIBLE else None) for e, sol in results.items())
    e_star = incumbent()
    x = dict(results[e_star].x)
    value = results[e_star].objective
    polished = False
    if cfg.polish:
        ranked = sorted(
            ((sol.objective, e) for e, sol in results.items() if sol.status != INFEASIBLE),
            key=lambda t: (-t[0], t[1]),
        )[: cfg.polish_top]
        for _obj, e0 in ranked:
            got = _polish(pinned, results[e0], e0, kinks)
            if got is not None and got[0] > value:
                value, e_star, x = got
                polished = True
    sched = extract_scheduler(n, x)
    freq = frequencies(n, sched)
    e_chk, mad, exact_value = madpe_from_frequencies(n, freq, lam)
    if exact_value != value:
        raise AssertionError(f"reconstruction mismatch: LP {value} vs scheduler {exact_value}")
    return MadpeSolution(
        exact_value,
        e_chk,
        mad,
        freq,
        sched,
        log,
        (1 + 2 * lam) * delta / 2,
        n.k,
        n.ell,
        len(results),
        polished,
    )
