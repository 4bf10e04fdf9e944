"""Recompute the worked-example numbers (measures, optimal values, grid optima) and print them as a table."""
from __future__ import annotations

import argparse
import json
from fractions import Fraction as F

from riskmdp import madpe, measures, oracle, tbpe, zoo
from riskmdp.model import MemorylessRandomized, fmt


def memoryless(m, **choice) -> MemorylessRandomized:
    base = {s: {m.enabled(s)[0]: F(1)} for s in m.states if not m.is_trap(s)}
    base.update(choice)
    return MemorylessRandomized(base)


def randomization_rows() -> list[dict]:
    m = zoo.randomization_mdp()
    rows = []
    for label, mix in [("alpha", {"alpha": F(1)}), ("half", {"alpha": F(1, 2), "beta": F(1, 2)}), ("beta", {"beta": F(1)})]:
        d = measures.distribution_of(m, memoryless(m, s_init=mix))
        rep = measures.deviation_report(d)
        rows.append(
            {
                "model": "randomization",
                "scheduler": label,
                "E": fmt(rep.expectation),
                "MAD": fmt(rep.mad),
                "V": fmt(rep.variance),
                "MADPE[4]": fmt(measures.penalized(d, measures.PenaltySpec("madpe", 4))),
            }
        )
    return rows


def optimum_rows(lam: F) -> list[dict]:
    rows = []
    for name, m in [("randomization", zoo.randomization_mdp()), ("gamble", zoo.gamble_mdp()), ("loop(1/4)", zoo.loop_mdp(F(1, 4)))]:
        sol = madpe.solve_madpe_sweep(m, lam)
        rows.append({"model": name, "objective": f"MADPE[{fmt(lam)}]", "value": fmt(sol.value), "gap_bound": fmt(sol.gap_bound)})
    for name, m, t in [("randomization", zoo.randomization_mdp(), 1), ("gamble", zoo.gamble_mdp(), 30), ("heavy_loop(101)", zoo.heavy_loop_mdp(101), 5)]:
        sol = tbpe.solve_tbpe(m, tbpe.make_penalty("tbp", t, 1))
        rows.append({"model": name, "objective": f"TBPE[1, t={t}]", "value": fmt(sol.value)})
    return rows


def grid_rows(resolution: int) -> list[dict]:
    m = zoo.gamble_mdp()
    rows = []
    for kind, lam in [("svpe", F(1, 100)), ("vpe", F(1, 100)), ("vpe", F(1, 10)), ("vpe", F(1))]:
        res = oracle.grid_search(m, oracle.GridSpec(resolution, kind, lam))
        rows.append(
            {
                "model": "gamble",
                "objective": f"{kind.upper()}[{fmt(lam)}]",
                "p_alpha": fmt(res.probabilities[0][0]),
                "value": f"{float(res.value):.6f}",
            }
        )
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambda", dest="lam", type=F, default=F(2, 5), help="MADPE penalty for the optimum rows")
    ap.add_argument("--resolution", type=int, default=1000)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    rows = randomization_rows() + optimum_rows(args.lam) + grid_rows(args.resolution)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    for row in rows:
        print("  ".join(f"{k}={v}" for k, v in row.items()))


if __name__ == "__main__":
    main()
