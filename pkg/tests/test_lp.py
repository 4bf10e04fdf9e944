import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmdp.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LpFormatError,
    LpProblem,
    check_certificate,
    parse_lp,
    solve_lp,
    write_lp,
)
from riskmdp.oracle import vertex_lp_oracle

from support import random_lp


def small_lp() -> LpProblem:
    p = LpProblem()
    x, y = p.add_variable("x"), p.add_variable("y")
    p.add_constraint({x: 1, y: 1}, "<=", 4, "cap")
    p.add_constraint({x: 1, y: 3}, "<=", 6, "mix")
    p.set_objective({x: 3, y: 5})
    return p


def test_optimum_and_certificate():
    p = small_lp()
    sol = solve_lp(p)
    assert sol.status == OPTIMAL
    assert sol.objective == 14 and sol.x == {"x": 3, "y": 1}
    assert check_certificate(p, sol)
    assert sol.duals == {"cap": 2, "mix": 1}


def test_equality_and_free_variable():
    p = LpProblem()
    x = p.add_variable("x", lower=None)
    y = p.add_variable("y", upper=F(5, 2))
    p.add_constraint({x: 1, y: -1}, "=", -2)
    p.set_objective({x: 1, y: 1}, constant=1)
    sol = solve_lp(p)
    assert sol.status == OPTIMAL and sol.x["x"] == F(1, 2) and sol.objective == 4
    assert check_certificate(p, sol)


def test_infeasible_has_farkas_ray():
    p = LpProblem()
    x = p.add_variable("x")
    p.add_constraint({x: 1}, ">=", 3)
    p.add_constraint({x: 1}, "<=", 2)
    sol = solve_lp(p)
    assert sol.status == INFEASIBLE and sol.farkas


def test_unbounded_has_improving_ray():
    p = LpProblem()
    x, y = p.add_variable("x"), p.add_variable("y")
    p.add_constraint({x: 1, y: -1}, "<=", 1)
    p.set_objective({x: 1})
    sol = solve_lp(p)
    assert sol.status == UNBOUNDED
    assert sum(p.objective.get(v, 0) * d for v, d in sol.ray.items()) > 0
    assert all(d >= 0 for d in sol.ray.values())


def test_degenerate_lp_terminates():
    # many constraints tight at the origin
    p = LpProblem()
    xs = [p.add_variable(f"x{i}") for i in range(4)]
    for i in range(6):
        p.add_constraint({v: (j + i) % 3 - 1 for j, v in enumerate(xs)}, "<=", 0)
    p.add_constraint({v: 1 for v in xs}, "<=", 1)
    p.set_objective({v: i + 1 for i, v in enumerate(xs)})
    sol = solve_lp(p)
    assert sol.status == OPTIMAL and check_certificate(p, sol)
    assert sol.objective == vertex_lp_oracle(p)


def test_text_round_trip():
    p = small_lp()
    text = write_lp(p, header="demo", quadratic=[(F(-2, 5), "x", "y")])
    back, quad, header = parse_lp(text)
    assert back == p and quad == [(F(-2, 5), "x", "y")] and header == "demo"
    assert write_lp(back, header="demo", quadratic=quad) == text


def test_parse_rejects_garbage():
    with pytest.raises(LpFormatError):
        parse_lp("this is not an lp\n")


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_simplex_matches_vertex_enumeration(seed):
    p = random_lp(random.Random(seed))
    sol = solve_lp(p)
    expected = vertex_lp_oracle(p)
    if expected is None:
        assert sol.status == INFEASIBLE
    else:
        assert sol.status == OPTIMAL and sol.objective == expected
        assert check_certificate(p, sol)
