"""Command-line front end: ``riskmdp <command> ...`` prints a JSON report on stdout.

Exit codes: 0 success, 1 usage error, 2 model error, 3 solver refusal,
4 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from typing import Any

from . import expect, madpe, measures, oracle, reductions, tbpe
from .model import (
    Chain,
    MemorylessRandomized,
    ModelError,
    SchedulerError,
    fmt,
    model_from_file,
    parse_rational,
    parse_scheduler,
    serialize,
    serialize_scheduler,
    validate,
)
from .preprocess import InfiniteExpectationError, normalize

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_REFUSED, EXIT_BUDGET = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        raise UsageError(message)


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


# ---------------------------------------------------------------------------
# Report plumbing


class Run:
    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.timings: dict[str, float] = {}
        self.model_hash: str | None = None
        self.summary: list[str] = []

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round((time.perf_counter() - start) * 1000, 3)

    def say(self, line: str) -> None:
        self.summary.append(line)


def _jsonable(obj: Any, decimals: int | None) -> Any:
    if isinstance(obj, Fraction):
        return fmt(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            out[str(k)] = _jsonable(v, decimals)
            if decimals is not None and isinstance(v, Fraction):
                out[f"{k}_decimal"] = f"{float(v):.{decimals}f}"
        return out
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v, decimals) for v in obj]
    return str(obj)


def _load_model(run: Run, path: str):
    with run.phase("parse"):
        m = model_from_file(path)
    run.model_hash = m.digest()
    return m


def _load_chain(run: Run, path: str) -> Chain:
    m = _load_model(run, path)
    if not m.is_chain:
        raise ModelError(f"{path} is not a Markov chain (some state has several actions)")
    return Chain.from_mdp(m)


def _load_scheduler(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_scheduler(fh.read())


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _measure_payload(d, spec: measures.PenaltySpec | None) -> dict:
    rep = measures.deviation_report(d)
    out: dict[str, Any] = dict(rep.as_dict())
    out["distribution"] = d.to_json()
    if spec is not None:
        out["penalized"] = {"kind": spec.kind, "lambda": spec.lam, "value": measures.penalized(d, spec)}
    return out


def _bounds_payload(b: measures.MeasureBounds, spec: measures.PenaltySpec | None) -> dict:
    out: dict[str, Any] = {
        "mode": "bounds",
        "tail_mass": b.tail_mass,
        "E": b.expectation,
        "V": b.variance,
        "MAD": [b.mad.lo, b.mad.hi],
        "SMAD": [b.smad.lo, b.smad.hi],
        "SV": [b.semivariance.lo, b.semivariance.hi],
    }
    if spec is not None:
        iv = b.penalized(spec)
        out["penalized"] = {"kind": spec.kind, "lambda": spec.lam, "value": [iv.lo, iv.hi]}
    return out


def _spec_from(args) -> measures.PenaltySpec | None:
    if args.kind is None:
        return None
    return measures.PenaltySpec(args.kind, args.lam or Fraction(0), args.threshold)


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(run: Run) -> tuple[dict, int]:
    m = _load_model(run, run.args.model)
    rep = validate(m)
    run.say(f"{len(m.states)} states, {len(rep.violations)} violations")
    payload = {
        "ok": rep.ok,
        "states": len(m.states),
        "decision_states": len(m.decision_states()),
        "violations": [{"kind": v.kind, "message": v.message} for v in rep.violations],
    }
    return payload, EXIT_OK if rep.ok else EXIT_MODEL


def cmd_normalize(run: Run) -> tuple[dict, int]:
    m = _load_model(run, run.args.model)
    with run.phase("normalize"):
        nm = normalize(m)
    text = serialize(nm.mdp)
    if run.args.output:
        _write(run.args.output, text)
    run.say(f"normalized: {len(m.states)} -> {len(nm.mdp.states)} states")
    payload = {
        "states": len(nm.mdp.states),
        "goal": nm.goal,
        "provenance": {s: sorted(v) for s, v in nm.provenance.items()},
        "normalized_hash": nm.mdp.digest(),
    }
    if not run.args.output:
        payload["model"] = text
    return payload, EXIT_OK


def cmd_expmax(run: Run) -> tuple[dict, int]:
    m = _load_model(run, run.args.model)
    nm = normalize(m)
    direction = expect.MIN if run.args.min else expect.MAX
    with run.phase("solve"):
        if run.args.float:
            table = expect.value_iteration(nm, direction, run.args.tolerance)
        else:
            table = expect.policy_iteration(nm, direction)
    init = nm.mdp.initial
    run.say(f"E^{direction}(s_init) = {fmt(table.values[init]) if table.exact else table.values[init]}")
    return {
        "direction": direction,
        "exact": table.exact,
        "value": table.values[init],
        "values": dict(table.values),
        "policy": dict(table.policy),
    }, EXIT_OK


def cmd_measures(run: Run) -> tuple[dict, int]:
    args = run.args
    spec = _spec_from(args)
    if args.chain:
        c = _load_chain(run, args.chain)
        model, sched = c, None
    elif args.model and args.scheduler:
        model = _load_model(run, args.model)
        sched = _load_scheduler(args.scheduler)
        sched.check(model)
    else:
        raise UsageError("measures needs --chain, or --model together with --scheduler")
    with run.phase("distribution"):
        if sched is None:
            try:
                d = measures.exact_distribution(model)
            except measures.CyclicModelError:
                if args.epsilon is None:
                    raise
                d = measures.truncated_distribution(model, args.epsilon)
        else:
            d = measures.distribution_of(model, sched, args.epsilon)
    if d.tail_mass:
        with run.phase("bounds"):
            b = measures.measure_bounds(model, sched, args.epsilon)
        run.say(f"bounds mode, tail mass {float(b.tail_mass):.3g}")
        return _bounds_payload(b, spec), EXIT_OK
    payload = _measure_payload(d, spec)
    run.say("E = {E}, MAD = {MAD}, V = {V}".format(**{k: fmt(v) for k, v in payload.items() if k in ("E", "MAD", "V")}))
    return payload, EXIT_OK


def _penalty(args) -> tbpe.PenaltyFunction:
    if args.threshold is None:
        raise UsageError("--threshold is required")
    bps = None
    if args.penalty == "custom":
        if not args.breakpoints:
            raise UsageError("--penalty custom needs --breakpoints")
        with open(args.breakpoints, encoding="utf-8") as fh:
            bps = tbpe.parse_breakpoints(fh.read())
    if args.penalty == "tbp" and args.lam is None:
        raise UsageError("--penalty tbp needs --lambda")
    return tbpe.make_penalty(args.penalty, args.threshold, args.lam, bps)


def cmd_solve_tbpe(run: Run) -> tuple[dict, int]:
    m = _load_model(run, run.args.model)
    pen = _penalty(run.args)
    with run.phase("solve"):
        sol = tbpe.solve_tbpe(m, pen, exact=not run.args.float, tolerance=run.args.tolerance)
    text = serialize_scheduler(sol.scheduler)
    if run.args.scheduler_out:
        _write(run.args.scheduler_out, text)
    run.say(f"TBPE {pen.describe()} = {fmt(sol.value) if sol.exact else sol.value}")
    payload = {
        "penalty": pen.describe(),
        "value": sol.value,
        "exact": sol.exact,
        "unfolded_states": len(sol.unfolding.mdp.states),
    }
    if not run.args.scheduler_out:
        payload["scheduler"] = text
    return payload, EXIT_OK


def cmd_solve_madpe(run: Run) -> tuple[dict, int]:
    args = run.args
    madpe.check_lambda(args.lam)
    m = _load_model(run, args.model)
    cfg = madpe.SweepConfig(delta=args.delta, refine_rounds=args.refine, jobs=args.jobs)
    with run.phase("sweep"):
        sol = madpe.solve_madpe_sweep(m, args.lam, cfg)
    text = serialize_scheduler(sol.scheduler)
    if args.scheduler_out:
        _write(args.scheduler_out, text)
    run.say(f"MADPE[{fmt(args.lam)}] >= {fmt(sol.value)} (gap bound {fmt(sol.gap_bound)})")
    payload = {
        "lambda": args.lam,
        "value": sol.value,
        "E": sol.e_star,
        "MAD": sol.mad,
        "gap_bound": sol.gap_bound,
        "k": sol.k,
        "ell": sol.ell,
        "lp_solves": sol.lp_solves,
        "polished": sol.polished,
        "sweep": [[e, v] for e, v in sol.sweep_log],
    }
    if not args.scheduler_out:
        payload["scheduler"] = text
    return payload, EXIT_OK


def cmd_export_qp(run: Run) -> tuple[dict, int]:
    args = run.args
    madpe.check_lambda(args.lam)
    m = _load_model(run, args.model)
    with run.phase("build"):
        n = madpe.build_unfolding_n(m)
        q = madpe.build_qp(n, args.lam)
        text = madpe.export_qp(q)
    if args.output:
        _write(args.output, text)
    run.say(f"QP with {len(q.lp.variables)} variables and {len(q.lp.constraints)} constraints")
    payload = {
        "variables": len(q.lp.variables),
        "constraints": len(q.lp.constraints),
        "k": q.k,
        "ell": q.ell,
        "unfolded_states": len(n.mdp.states),
    }
    if not args.output:
        payload["qp"] = text
    return payload, EXIT_OK


def cmd_oracle_grid(run: Run) -> tuple[dict, int]:
    args = run.args
    m = _load_model(run, args.model)
    spec = oracle.GridSpec(
        args.resolution,
        args.objective,
        args.lam,
        args.threshold,
        args.scheduler_class,
        args.bound,
        budget=args.budget,
    )
    with run.phase("grid"):
        res = oracle.grid_search(m, spec)
    run.say(f"best {args.objective} = {fmt(res.value)} over {res.points} grid points ({res.mode})")
    decisions = [d if isinstance(d, str) else f"{d[0]}@{d[1]}" for d in res.decisions]
    return {
        "value": res.value,
        "points": res.points,
        "mode": res.mode,
        "decisions": {d: list(p) for d, p in zip(decisions, res.probabilities)},
    }, EXIT_OK


def cmd_oracle_simulate(run: Run) -> tuple[dict, int]:
    args = run.args
    m = _load_model(run, args.model)
    sched = _load_scheduler(args.scheduler) if args.scheduler else None
    if sched is None:
        if not m.is_chain:
            raise UsageError("simulating an MDP needs --scheduler")
        sched = MemorylessRandomized({s: {m.enabled(s)[0]: 1} for s in m.states if not m.is_trap(s)})
    seed = args.seed if args.seed is not None else int(os.environ.get("RISKMDP_SEED", "0"))
    with run.phase("simulate"):
        rep = oracle.simulate(m, sched, args.n, seed, jobs=args.jobs)
    run.say(f"mean {rep.mean:.6g} +- {rep.se_mean:.2g} over {rep.n} paths")
    return rep.to_json(), EXIT_OK


def cmd_reduce(run: Run) -> tuple[dict, int]:
    args = run.args
    c = _load_chain(run, args.chain)
    method = args.method
    payload: dict[str, Any] = {"method": method, "t": args.t}
    with run.phase("reduce"):
        if method == "mad":
            gad = reductions.build_gadgets(c, args.t)
            prob, trace = reductions.recover_tail_probability_mad(c, args.t)
            payload.update(trace)
            payload["L"] = gad.L
            payload["K"] = gad.K
            payload["gadget_m1"] = serialize(gad.m1.chain)
            payload["gadget_m2"] = serialize(gad.m2.chain)
            run.say(f"Pr(rew > {args.t}) = {fmt(prob)}")
        elif method == "crinkle":
            prob = reductions.recover_tail_probability_crinkle(c, args.t)
            payload["probability"] = prob
            run.say(f"Pr(rew >= {args.t}) = {fmt(prob)}")
        else:
            res = reductions.binary_search_mad(c, reductions.exact_mad_oracle(c))
            payload.update(
                {
                    "MAD": res.mad,
                    "calls": res.calls,
                    "call_bound": res.call_bound,
                    "L": res.L,
                    "L_product": res.L_product,
                    "K": res.K,
                    "queries": [[q, a] for q, a in res.queries],
                }
            )
            run.say(f"MAD = {fmt(res.mad)} after {res.calls} oracle calls")
    return payload, EXIT_OK


def cmd_eval_scheduler(run: Run) -> tuple[dict, int]:
    args = run.args
    m = _load_model(run, args.model)
    sched = _load_scheduler(args.scheduler)
    sched.check(m)
    spec = _spec_from(args)
    with run.phase("distribution"):
        d = measures.distribution_of(m, sched, args.epsilon)
    if d.tail_mass:
        b = measures.measure_bounds(m, sched, args.epsilon)
        return _bounds_payload(b, spec), EXIT_OK
    payload = _measure_payload(d, spec)
    run.say(f"E = {fmt(payload['E'])}")
    return payload, EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--decimals", type=int, metavar="N", help="add N-digit decimal renderings of exact values")
    common.add_argument("--quiet", action="store_true", help="no human-readable summary on stderr")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for parallel regions")
    common.add_argument("--timings", action="store_true", help="include per-phase timings in the report")
    common.add_argument("--format", choices=["json"], default="json")

    p = _Parser(prog="riskmdp", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name: str, func, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=func)
        return sp

    def penalty_args(sp, kinds=measures.KINDS) -> None:
        sp.add_argument("--kind", choices=kinds, help="penalized expectation to report")
        sp.add_argument("--lambda", dest="lam", type=_rational)
        sp.add_argument("--threshold", type=_rational)

    sp = cmd("validate", cmd_validate, "check a model file")
    sp.add_argument("--model", required=True)

    sp = cmd("normalize", cmd_normalize, "collapse end components and zero-value states")
    sp.add_argument("--model", required=True)
    sp.add_argument("--output")

    sp = cmd("expmax", cmd_expmax, "optimal expected total reward")
    sp.add_argument("--model", required=True)
    sp.add_argument("--min", action="store_true", help="minimize instead")
    sp.add_argument("--float", action="store_true", help="float value iteration")
    sp.add_argument("--tolerance", type=float, default=1e-10)

    sp = cmd("measures", cmd_measures, "reward law and deviation measures")
    sp.add_argument("--chain")
    sp.add_argument("--model")
    sp.add_argument("--scheduler")
    sp.add_argument("--epsilon", type=_rational, help="tail bound for cyclic models (bounds mode)")
    penalty_args(sp)

    sp = cmd("solve-tbpe", cmd_solve_tbpe, "maximize a threshold-based penalized expectation")
    sp.add_argument("--model", required=True)
    sp.add_argument("--penalty", choices=tbpe.PENALTY_KINDS, default="tbp")
    sp.add_argument("--lambda", dest="lam", type=_rational)
    sp.add_argument("--threshold", type=_rational)
    sp.add_argument("--breakpoints")
    sp.add_argument("--float", action="store_true")
    sp.add_argument("--tolerance", type=float, default=1e-10)
    sp.add_argument("--scheduler-out")

    sp = cmd("solve-madpe", cmd_solve_madpe, "maximize E - lambda MAD for lambda <= 1/2")
    sp.add_argument("--model", required=True)
    sp.add_argument("--lambda", dest="lam", type=_rational, required=True)
    sp.add_argument("--delta", type=_rational, help="sweep step (default E^max/64)")
    sp.add_argument("--refine", type=int, default=3)
    sp.add_argument("--scheduler-out")

    sp = cmd("export-qp", cmd_export_qp, "write the MADPE quadratic program")
    sp.add_argument("--model", required=True)
    sp.add_argument("--lambda", dest="lam", type=_rational, required=True)
    sp.add_argument("--output")

    sp = cmd("oracle", None, "brute-force ground truth")
    osub = sp.add_subparsers(dest="oracle_command", required=True, parser_class=_Parser)
    gp = osub.add_parser("grid", help="grid search over randomized schedulers", parents=[common])
    gp.set_defaults(func=cmd_oracle_grid)
    gp.add_argument("--model", required=True)
    gp.add_argument("--objective", choices=measures.KINDS, required=True)
    gp.add_argument("--lambda", dest="lam", type=_rational, required=True)
    gp.add_argument("--threshold", type=_rational)
    gp.add_argument("--resolution", type=int, default=100)
    gp.add_argument("--class", dest="scheduler_class", choices=[oracle.MEMORYLESS, oracle.REWARD_BASED], default=oracle.MEMORYLESS)
    gp.add_argument("--bound", type=int, default=0)
    gp.add_argument("--budget", type=int, default=50_000_000)
    sm = osub.add_parser("simulate", help="Monte Carlo simulation", parents=[common])
    sm.set_defaults(func=cmd_oracle_simulate)
    sm.add_argument("--model", required=True)
    sm.add_argument("--scheduler")
    sm.add_argument("-n", type=int, default=100_000)
    sm.add_argument("--seed", type=int)

    sp = cmd("reduce", cmd_reduce, "hardness-proof constructions on a chain")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--t", type=int, required=True)
    sp.add_argument("--method", choices=["mad", "crinkle", "search"], default="mad")

    sp = cmd("eval-scheduler", cmd_eval_scheduler, "measures of a model under a scheduler file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--scheduler", required=True)
    sp.add_argument("--epsilon", type=_rational)
    penalty_args(sp)
    return p


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"riskmdp: usage error: {exc}", file=stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    r = Run(args, argv)
    payload: dict[str, Any]
    try:
        payload, code = args.func(r)
    except (UsageError, tbpe.PenaltyError) as exc:
        payload, code = {"error": str(exc), "category": "usage"}, EXIT_USAGE
    except FileNotFoundError as exc:
        payload, code = {"error": str(exc), "category": "io"}, EXIT_MODEL
    except ModelError as exc:
        payload, code = {"error": str(exc), "category": exc.category}, EXIT_MODEL
    except (SchedulerError, InfiniteExpectationError, measures.CyclicModelError) as exc:
        payload, code = {"error": str(exc), "category": type(exc).__name__}, EXIT_MODEL
    except (madpe.MadpeRefusal, reductions.ReductionError, measures.TailMassError) as exc:
        payload, code = {"error": str(exc), "category": "refused"}, EXIT_REFUSED
    except (oracle.OracleBudgetError, measures.BudgetExceeded, expect.NonConvergenceError) as exc:
        payload, code = {"error": str(exc), "category": "budget"}, EXIT_BUDGET
    except ValueError as exc:  # bad parameter combinations caught by the library
        payload, code = {"error": str(exc), "category": "usage"}, EXIT_USAGE
    report: dict[str, Any] = {
        "command": argv,
        "model_hash": r.model_hash,
        "result": payload,
        "exit_code": code,
    }
    if args.timings:
        report["timings_ms"] = r.timings
    print(json.dumps(_jsonable(report, args.decimals), indent=2, sort_keys=False), file=stdout)
    if not args.quiet:
        for line in r.summary:
            print(line, file=stderr)
        if "error" in payload:
            print(f"riskmdp: {payload['error']}", file=stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
