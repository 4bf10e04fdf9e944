"""Time the TBPE solver on the ladder family for growing thresholds and write a CSV."""
from __future__ import annotations

import argparse
import csv
import sys
import time

from riskmdp import tbpe, zoo
from riskmdp.preprocess import normalize


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stages", type=int, default=200)
    ap.add_argument("--thresholds", type=int, nargs="+", default=[10, 20, 40, 80, 170])
    ap.add_argument("--lambda", dest="lam", default="1")
    ap.add_argument("--float", action="store_true", help="value iteration instead of exact policy iteration")
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args(argv)

    m = normalize(zoo.scaling_family(args.stages)).mdp
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(fh)
    writer.writerow(["states", "threshold", "unfolded_states", "seconds", "value"])
    for t in args.thresholds:
        start = time.perf_counter()
        sol = tbpe.solve_tbpe(m, tbpe.make_penalty("tbp", t, args.lam), exact=not args.float)
        took = time.perf_counter() - start
        value = f"{float(sol.value):.6f}"
        writer.writerow([len(m.states), t, len(sol.unfolding.mdp.states), f"{took:.3f}", value])
        fh.flush()
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
