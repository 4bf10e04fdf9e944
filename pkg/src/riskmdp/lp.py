"""Exact rational linear programming: a two-phase primal simplex and a plain-text LP format.

The tableau is stored as sparse rows (dicts from column index to Fraction),
which keeps the flow-balance LPs of the unfoldings cheap.  Pricing is Dantzig's
largest-coefficient rule until a run of degenerate pivots is seen; from then on
Bland's rule guarantees termination.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .model import Number, fmt, parse_rational

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

RELATIONS = ("<=", ">=", "=")


class LpFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: Mapping[str, Fraction]
    rel: str
    rhs: Fraction

    def lhs(self, x: Mapping[str, Fraction]) -> Fraction:
        return sum((a * x.get(v, 0) for v, a in self.coeffs.items()), Fraction(0))

    def holds(self, x: Mapping[str, Fraction]) -> bool:
        lhs = self.lhs(x)
        return {"<=": lhs <= self.rhs, ">=": lhs >= self.rhs, "=": lhs == self.rhs}[self.rel]


@dataclass
class LpProblem:
    """Maximize ``objective . x`` subject to ``constraints`` and bounds.

    ``lower`` defaults to 0 for every variable; a lower bound of ``None`` makes
    the variable free.  ``upper`` is optional.
    """

    variables: list[str] = field(default_factory=list)
    objective: dict[str, Fraction] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    lower: dict[str, Fraction | None] = field(default_factory=dict)
    upper: dict[str, Fraction] = field(default_factory=dict)
    objective_constant: Fraction = Fraction(0)

    def add_variable(self, name: str, lower: Fraction | None = Fraction(0), upper: Fraction | None = None) -> str:
        if name in self.lower:
            raise ValueError(f"duplicate variable {name!r}")
        self.variables.append(name)
        self.lower[name] = None if lower is None else Fraction(lower)
        if upper is not None:
            self.upper[name] = Fraction(upper)
        return name

    def add_constraint(self, coeffs: Mapping[str, Number], rel: str, rhs, name: str | None = None) -> Constraint:
        if rel not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}")
        for v in coeffs:
            if v not in self.lower:
                raise ValueError(f"constraint references undeclared variable {v!r}")
        row = {v: Fraction(a) for v, a in coeffs.items() if a != 0}
        con = Constraint(name or f"c{len(self.constraints) + 1}", row, rel, Fraction(rhs))
        self.constraints.append(con)
        return con

    def set_objective(self, coeffs: Mapping[str, Number], constant=0) -> None:
        for v in coeffs:
            if v not in self.lower:
                raise ValueError(f"objective references undeclared variable {v!r}")
        self.objective = {v: Fraction(a) for v, a in coeffs.items() if a != 0}
        self.objective_constant = Fraction(constant)

    def copy(self) -> "LpProblem":
        return LpProblem(
            list(self.variables),
            dict(self.objective),
            list(self.constraints),
            dict(self.lower),
            dict(self.upper),
            self.objective_constant,
        )

    def value(self, x: Mapping[str, Fraction]) -> Fraction:
        return self.objective_constant + sum((c * x.get(v, 0) for v, c in self.objective.items()), Fraction(0))

    def is_feasible(self, x: Mapping[str, Fraction]) -> bool:
        for v in self.variables:
            lo, hi = self.lower[v], self.upper.get(v)
            if lo is not None and x.get(v, 0) < lo:
                return False
            if hi is not None and x.get(v, 0) > hi:
                return False
        return all(c.holds(x) for c in self.constraints)

    def _canonical(self):
        return (
            sorted(self.variables),
            sorted(self.objective.items()),
            [(c.name, sorted(c.coeffs.items()), c.rel, c.rhs) for c in self.constraints],
            sorted(self.lower.items()),
            sorted(self.upper.items()),
            self.objective_constant,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LpProblem):
            return NotImplemented
        return self._canonical() == other._canonical()


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: Mapping[str, Fraction] = field(default_factory=dict)
    objective: Fraction | None = None
    basis: tuple[str, ...] = ()
    duals: Mapping[str, Fraction] = field(default_factory=dict)
    reduced_costs: Mapping[str, Fraction] = field(default_factory=dict)
    ray: Mapping[str, Fraction] = field(default_factory=dict)
    farkas: Mapping[str, Fraction] = field(default_factory=dict)
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# Simplex


class _Tableau:
    """Sparse tableau for max c.x, A x = b, x >= 0, b >= 0."""

    def __init__(self, rows: list[dict[int, Fraction]], rhs: list[Fraction], basis: list[int], ncols: int):
        self.rows = rows
        self.rhs = rhs
        self.basis = basis
        self.ncols = ncols
        self.cost: dict[int, Fraction] = {}
        self.z = Fraction(0)
        self.pivots = 0

    def set_costs(self, c: Mapping[int, Fraction]) -> None:
        """Reduced costs d_j = c_j - c_B B^-1 A_j for the current basis."""
        d = {j: Fraction(v) for j, v in c.items() if v}
        z = Fraction(0)
        for i, b in enumerate(self.basis):
            cb = c.get(b, 0)
            if not cb:
                continue
            for j, a in self.rows[i].items():
                d[j] = d.get(j, Fraction(0)) - cb * a
            z += cb * self.rhs[i]
        self.cost = {j: v for j, v in d.items() if v}
        self.z = z

    def pivot(self, r: int, j: int) -> None:
        row = self.rows[r]
        inv = 1 / row[j]
        if inv != 1:
            for k in row:
                row[k] *= inv
            self.rhs[r] *= inv
        row[j] = Fraction(1)
        items = list(row.items())
        b_r = self.rhs[r]
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other.get(j)
            if not f:
                continue
            for k, a in items:
                v = other.get(k, 0) - f * a
                if v:
                    other[k] = v
                else:
                    other.pop(k, None)
            self.rhs[i] -= f * b_r
        f = self.cost.get(j)
        if f:
            for k, a in items:
                v = self.cost.get(k, 0) - f * a
                if v:
                    self.cost[k] = v
                else:
                    self.cost.pop(k, None)
            self.z += f * b_r
        self.basis[r] = j
        self.pivots += 1

    def run(self, allowed: set[int] | None = None, max_pivots: int = 1_000_000) -> tuple[str, int | None]:
        """Pivot to optimality; returns (status, unbounded column)."""
        bland = False
        degenerate_run = 0
        for _ in range(max_pivots):
            cands = [(v, j) for j, v in self.cost.items() if v > 0 and (allowed is None or j in allowed)]
            if not cands:
                return OPTIMAL, None
            if bland:
                j = min(j for _, j in cands)
            else:
                best = max(v for v, _ in cands)
                j = min(j for v, j in cands if v == best)
            r = None
            best_ratio = None
            for i, row in enumerate(self.rows):
                a = row.get(j)
                if a is None or a <= 0:
                    continue
                ratio = self.rhs[i] / a
                if best_ratio is None or ratio < best_ratio or (ratio == best_ratio and self.basis[i] < self.basis[r]):
                    best_ratio, r = ratio, i
            if r is None:
                return UNBOUNDED, j
            if best_ratio == 0:
                degenerate_run += 1
                if degenerate_run > 10:
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(r, j)
        raise RuntimeError("simplex pivot budget exhausted")


def solve_lp(p: LpProblem, max_pivots: int = 1_000_000) -> LpSolution:
    """Solve ``p`` exactly; optimal solutions carry duals and reduced costs as a certificate."""
    # columns: one (or two, for free variables) per variable, shifted by the lower bound
    cols: list[tuple[str, int]] = []
    col_of: dict[str, list[tuple[int, int]]] = {}
    for v in p.variables:
        col_of[v] = [(len(cols), 1)]
        cols.append((v, 1))
        if p.lower[v] is None:
            col_of[v].append((len(cols), -1))
            cols.append((v, -1))
    shift = {v: (p.lower[v] or Fraction(0)) for v in p.variables}

    rows_src: list[tuple[str, dict[str, Fraction], str, Fraction]] = [
        (c.name, dict(c.coeffs), c.rel, c.rhs) for c in p.constraints
    ]
    for v in p.variables:
        if v in p.upper:
            rows_src.append((f"ub:{v}", {v: Fraction(1)}, "<=", p.upper[v]))

    n_struct = len(cols)
    rows: list[dict[int, Fraction]] = []
    rhs: list[Fraction] = []
    basis: list[int] = []
    signs: list[int] = []
    init_col: list[int] = []
    artificial: set[int] = set()
    ncols = n_struct
    for _name, coeffs, rel, b in rows_src:
        row: dict[int, Fraction] = {}
        b = b - sum((a * shift[v] for v, a in coeffs.items()), Fraction(0))
        for v, a in coeffs.items():
            for j, sgn in col_of[v]:
                row[j] = row.get(j, Fraction(0)) + sgn * a
        sign = 1
        if b < 0:
            sign = -1
            b = -b
            row = {j: -a for j, a in row.items()}
            rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        row = {j: a for j, a in row.items() if a}
        if rel == "<=":
            row[ncols] = Fraction(1)
            basic = ncols
            ncols += 1
        else:
            if rel == ">=":
                row[ncols] = Fraction(-1)
                ncols += 1
            row[ncols] = Fraction(1)
            basic = ncols
            artificial.add(ncols)
            ncols += 1
        rows.append(row)
        rhs.append(b)
        basis.append(basic)
        signs.append(sign)
        init_col.append(basic)

    tab = _Tableau(rows, rhs, basis, ncols)
    non_art = set(range(ncols)) - artificial
    if artificial:
        tab.set_costs({j: Fraction(-1) for j in artificial})
        tab.run(non_art, max_pivots)
        if tab.z < 0:
            farkas = {
                rows_src[i][0]: signs[i] * (Fraction(-1 if init_col[i] in artificial else 0) - tab.cost.get(init_col[i], 0))
                for i in range(len(rows))
            }
            return LpSolution(INFEASIBLE, farkas=farkas, pivots=tab.pivots)
        # drive zero-level artificials out of the basis where possible
        for i, b in enumerate(tab.basis):
            if b in artificial:
                j = next((j for j in sorted(tab.rows[i]) if j not in artificial), None)
                if j is not None:
                    tab.pivot(i, j)

    c_std = {}
    for v, c in p.objective.items():
        for j, sgn in col_of[v]:
            c_std[j] = c_std.get(j, Fraction(0)) + sgn * c
    tab.set_costs(c_std)
    status, j_unb = tab.run(non_art, max_pivots)
    if status == UNBOUNDED:
        direction = {j_unb: Fraction(1)}
        for i, b in enumerate(tab.basis):
            a = tab.rows[i].get(j_unb)
            if a:
                direction[b] = -a
        ray: dict[str, Fraction] = {}
        for j, d in direction.items():
            if j < n_struct:
                v, sgn = cols[j]
                ray[v] = ray.get(v, Fraction(0)) + sgn * d
        return LpSolution(UNBOUNDED, ray=ray, basis=_basis_names(tab.basis, cols, n_struct), pivots=tab.pivots)

    val = [Fraction(0)] * ncols
    for i, b in enumerate(tab.basis):
        val[b] = tab.rhs[i]
    x = {v: shift[v] for v in p.variables}
    for j in range(n_struct):
        if val[j]:
            v, sgn = cols[j]
            x[v] += sgn * val[j]
    duals = {}
    for i in range(len(rows)):
        # d_j = c_j - y.A_j and A_j = e_i for the row's initial basic column, c_j = 0
        duals[rows_src[i][0]] = signs[i] * -tab.cost.get(init_col[i], Fraction(0))
    reduced = {}
    for v in p.variables:
        j, sgn = col_of[v][0]
        reduced[v] = tab.cost.get(j, Fraction(0))
    return LpSolution(
        OPTIMAL,
        x,
        p.value(x),
        _basis_names(tab.basis, cols, n_struct),
        duals,
        reduced,
        pivots=tab.pivots,
    )


def _basis_names(basis: Sequence[int], cols, n_struct: int) -> tuple[str, ...]:
    out = []
    for b in basis:
        if b < n_struct:
            v, sgn = cols[b]
            out.append(v if sgn > 0 else f"-{v}")
        else:
            out.append(f"_aux{b - n_struct}")
    return tuple(out)


def check_certificate(p: LpProblem, sol: LpSolution) -> bool:
    """Verify primal feasibility, dual feasibility and a zero duality gap exactly."""
    if sol.status != OPTIMAL:
        return False
    x = sol.x
    if not p.is_feasible(x) or sol.objective != p.value(x):
        return False
    rows = [(c.name, c.coeffs, c.rel, c.rhs) for c in p.constraints]
    rows += [(f"ub:{v}", {v: Fraction(1)}, "<=", u) for v, u in p.upper.items()]
    y = sol.duals
    for name, coeffs, rel, b in rows:
        yi = y.get(name, Fraction(0))
        if rel == "<=" and yi < 0 or rel == ">=" and yi > 0:
            return False
        lhs = sum((a * x[v] for v, a in coeffs.items()), Fraction(0))
        if yi and lhs != b:
            return False
    col: dict[str, Fraction] = {v: Fraction(0) for v in p.variables}
    for name, coeffs, _rel, _b in rows:
        yi = y.get(name, Fraction(0))
        if yi:
            for v, a in coeffs.items():
                col[v] += yi * a
    gap = Fraction(0)
    for v in p.variables:
        rc = p.objective.get(v, Fraction(0)) - col[v]
        lo = p.lower[v]
        if lo is None:
            if rc != 0:
                return False
        else:
            if rc > 0 or (rc < 0 and x[v] != lo):
                return False
            gap += rc * lo
    dual_obj = sum((y.get(name, Fraction(0)) * b for name, _c, _r, b in rows), Fraction(0)) + gap
    return dual_obj + p.objective_constant == sol.objective


# ---------------------------------------------------------------------------
# Text format
#
#   \ comment
#   maximize: 3 x + 2/5 y - 1/2 x * y
#   subject to:
#   c1: x + y - 4 <= 0
#   bounds: all >= 0
#     y <= 3
#     z free
#   end

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_#~.]*$")
_NUMBER = re.compile(r"^\d+(?:/\d+)?$")


def _check_name(v: str) -> str:
    if not _NAME.match(v):
        raise LpFormatError(f"variable name {v!r} is not writable")
    return v


def format_terms(terms: Sequence[tuple[Fraction, str]], constant: Fraction = Fraction(0)) -> str:
    """``[(c, "x"), (c, "x * y")]`` as ``c x + c x * y``; constant last."""
    parts: list[str] = []
    items = [(Fraction(c), t) for c, t in terms if c] + ([(Fraction(constant), "")] if constant else [])
    for c, t in items:
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = fmt(mag) if not t else (t if mag == 1 else f"{fmt(mag)} {t}")
        if not parts:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts) if parts else "0"


def parse_terms(text: str, line: int | None = None) -> tuple[list[tuple[Fraction, tuple[str, ...]]], Fraction]:
    """Inverse of :func:`format_terms`: returns (terms, constant); a term's key is one or two names."""
    toks = text.split()
    terms: list[tuple[Fraction, tuple[str, ...]]] = []
    const = Fraction(0)
    i = 0
    sign = 1
    expect_term = True
    while i < len(toks):
        tok = toks[i]
        if tok in "+-" and len(tok) == 1:
            sign = -1 if tok == "-" else 1
            i += 1
            if i == len(toks):
                raise LpFormatError(f"dangling sign in {text!r}", line)
            tok = toks[i]
        elif not expect_term:
            raise LpFormatError(f"expected + or - before {tok!r}", line)
        coef = Fraction(1)
        if _NUMBER.match(tok):
            coef = parse_rational(tok)
            if i + 1 == len(toks) or toks[i + 1] in ("+", "-"):
                const += sign * coef
                i += 1
                sign, expect_term = 1, False
                continue
            i += 1
            tok = toks[i]
        if not _NAME.match(tok):
            raise LpFormatError(f"bad variable name {tok!r}", line)
        names = [tok]
        i += 1
        if i < len(toks) and toks[i] == "*":
            if i + 1 == len(toks) or not _NAME.match(toks[i + 1]):
                raise LpFormatError("'*' must be followed by a variable", line)
            names.append(toks[i + 1])
            i += 2
        terms.append((sign * coef, tuple(names)))
        sign, expect_term = 1, False
    return terms, const


def write_lp(p: LpProblem, header: str = "", quadratic: Sequence[tuple[Fraction, str, str]] = ()) -> str:
    """Deterministic text for ``p``; ``quadratic`` adds ``c a * b`` objective terms."""
    for v in p.variables:
        _check_name(v)
    lines = [f"\\ riskmdp {'qp' if quadratic else 'lp'} v1" + (f"  {header}" if header else "")]
    obj = [(c, v) for v, c in p.objective.items()] + [(c, f"{a} * {b}") for c, a, b in quadratic]
    lines.append("maximize: " + format_terms(obj, p.objective_constant))
    lines.append("subject to:")
    for c in p.constraints:
        lines.append(f"{c.name}: {format_terms([(a, v) for v, a in c.coeffs.items()], -c.rhs)} {c.rel} 0")
    lines.append("bounds: all >= 0")
    for v in p.variables:
        lo = p.lower[v]
        if lo is None:
            lines.append(f"  {v} free")
        elif lo != 0:
            lines.append(f"  {v} >= {fmt(lo)}")
        if v in p.upper:
            lines.append(f"  {v} <= {fmt(p.upper[v])}")
    declared = " ".join(p.variables)
    lines.append(f"variables: {declared}" if declared else "variables:")
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse_lp(text: str) -> tuple[LpProblem, list[tuple[Fraction, str, str]], str]:
    """Parse :func:`write_lp` output; returns (problem, quadratic terms, header)."""
    lines = text.split("\n")
    header = ""
    objective_text = None
    cons: list[tuple[str, str, str, int]] = []
    bounds: list[tuple[str, int]] = []
    declared: list[str] | None = None
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if lineno == 1:
                m = re.match(r"^\\ riskmdp (?:lp|qp) v1(?:  (.*))?$", line)
                if not m:
                    raise LpFormatError("not a riskmdp LP document", lineno)
                header = m.group(1) or ""
            continue
        if line.startswith("maximize:"):
            objective_text = line[len("maximize:") :]
            section = "objective"
        elif line == "subject to:":
            section = "constraints"
        elif line.startswith("bounds:"):
            if line != "bounds: all >= 0":
                raise LpFormatError("only 'bounds: all >= 0' is supported as the default", lineno)
            section = "bounds"
        elif line.startswith("variables:"):
            declared = line[len("variables:") :].split()
            section = None
        elif line == "end":
            break
        elif section == "constraints":
            name, _, body = line.partition(":")
            m = re.match(r"^(.*)\s(<=|>=|=)\s+0$", body.strip())
            if not name or not m:
                raise LpFormatError(f"bad constraint {line!r}", lineno)
            cons.append((name.strip(), m.group(1), m.group(2), lineno))
        elif section == "bounds":
            bounds.append((line, lineno))
        else:
            raise LpFormatError(f"unexpected line {line!r}", lineno)
    else:
        raise LpFormatError("missing 'end'")
    if objective_text is None:
        raise LpFormatError("missing objective")
    obj_terms, obj_const = parse_terms(objective_text)
    parsed_cons = [(name, parse_terms(body, ln), rel, ln) for name, body, rel, ln in cons]
    if declared is None:
        declared = []
        for _c, names in obj_terms:
            declared += [n for n in names if n not in declared]
        for _n, (terms, _k), _r, _l in parsed_cons:
            declared += [n for _c, names in terms for n in names if n not in declared]
    p = LpProblem()
    for v in declared:
        p.add_variable(v)
    for line, ln in bounds:
        toks = line.split()
        if len(toks) == 2 and toks[1] == "free":
            p.lower[toks[0]] = None
        elif len(toks) == 3 and toks[1] in (">=", "<="):
            if toks[0] not in p.lower:
                raise LpFormatError(f"bound on undeclared variable {toks[0]!r}", ln)
            if toks[1] == ">=":
                p.lower[toks[0]] = parse_rational(toks[2])
            else:
                p.upper[toks[0]] = parse_rational(toks[2])
        else:
            raise LpFormatError(f"bad bound {line!r}", ln)
    linear: dict[str, Fraction] = {}
    quadratic: list[tuple[Fraction, str, str]] = []
    for c, names in obj_terms:
        if len(names) == 1:
            linear[names[0]] = linear.get(names[0], Fraction(0)) + c
        else:
            quadratic.append((c, names[0], names[1]))
    try:
        p.set_objective(linear, obj_const)
        for name, (terms, const), rel, ln in parsed_cons:
            coeffs: dict[str, Fraction] = {}
            for c, names in terms:
                if len(names) != 1:
                    raise LpFormatError("quadratic terms are only allowed in the objective", ln)
                coeffs[names[0]] = coeffs.get(names[0], Fraction(0)) + c
            p.add_constraint(coeffs, rel, -const, name)
    except ValueError as exc:
        if isinstance(exc, LpFormatError):
            raise
        raise LpFormatError(str(exc)) from exc
    return p, quadratic, header
