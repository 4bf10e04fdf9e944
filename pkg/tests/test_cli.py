import io
import json
from fractions import Fraction
from pathlib import Path

import pytest

from riskmdp.cli import EXIT_BUDGET, EXIT_MODEL, EXIT_OK, EXIT_REFUSED, EXIT_USAGE, run

MODELS = Path(__file__).resolve().parent.parent / "models"


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    report = json.loads(out.getvalue()) if out.getvalue() else None
    return code, report, err.getvalue()


def test_validate_ok():
    code, rep, _ = call("validate", "--model", MODELS / "randomization.mdp")
    assert code == EXIT_OK and rep["result"]["ok"] and rep["exit_code"] == 0
    assert rep["model_hash"] and "timings_ms" not in rep


def test_bad_model_file(tmp_path):
    bad = tmp_path / "bad.mdp"
    bad.write_text("mdp\ninitial s\nstate s\n  action a reward 1\n    -> s 1/3\n")
    code, rep, err = call("validate", "--model", bad)
    assert code == EXIT_MODEL and rep["result"]["category"] == "probability-sum"
    assert "line 5" in err


def test_usage_errors():
    assert call()[0] == EXIT_USAGE
    assert call("expmax")[0] == EXIT_USAGE
    assert call("measures", "--model", MODELS / "gamble.mdp")[0] == EXIT_USAGE
    assert call("solve-madpe", "--model", MODELS / "gamble.mdp", "--lambda", "x")[0] == EXIT_USAGE


def test_expmax_and_min():
    _, rep, _ = call("expmax", "--model", MODELS / "randomization.mdp")
    assert rep["result"]["value"] == "5/4"
    _, rep, _ = call("expmax", "--model", MODELS / "loop.mdp", "--min")
    assert rep["result"]["value"] == "1/2"


def test_measures_chain_with_decimals():
    _, rep, _ = call("measures", "--chain", MODELS / "small_chain.mc", "--decimals", "4", "--kind", "madpe", "--lambda", "1/2")
    res = rep["result"]
    assert res["E"] == "5/4" and res["E_decimal"] == "1.2500"
    assert res["MAD"] == "3/8" and res["penalized"]["value"] == "17/16"


def test_measures_bounds_mode(tmp_path):
    sched = tmp_path / "alpha.sched"
    sched.write_text("scheduler memoryless\nstate s_init: tau=1\nstate s1: tau=1\nstate s_dec: alpha=1\n")
    code, rep, _ = call("measures", "--model", MODELS / "loop.mdp", "--scheduler", sched, "--epsilon", "1/1099511627776")
    res = rep["result"]
    assert code == EXIT_OK and res["mode"] == "bounds" and res["E"] == "3/4"
    lo, hi = map(Fraction, res["MAD"])
    assert lo <= 2 * Fraction(3, 4) * Fraction(3, 4) <= hi


def test_solve_tbpe_writes_scheduler(tmp_path):
    out = tmp_path / "s.sched"
    code, rep, _ = call("solve-tbpe", "--model", MODELS / "gamble.mdp", "--lambda", "1", "--threshold", "30", "--scheduler-out", out)
    assert code == EXIT_OK and rep["result"]["value"] == "40"
    code, rep, _ = call("eval-scheduler", "--model", MODELS / "gamble.mdp", "--scheduler", out, "--kind", "tbpe", "--lambda", "1", "--threshold", "30")
    assert rep["result"]["penalized"]["value"] == "40"


def test_solve_tbpe_custom_needs_breakpoints(tmp_path):
    code, _, _ = call("solve-tbpe", "--model", MODELS / "gamble.mdp", "--penalty", "custom", "--threshold", "2")
    assert code == EXIT_USAGE
    bp = tmp_path / "bp.txt"
    bp.write_text("0 -2\n2 2\n")
    code, rep, _ = call("solve-tbpe", "--model", MODELS / "gamble.mdp", "--penalty", "custom", "--threshold", "2", "--breakpoints", bp)
    # m(0) = -2, so alpha is worth (-2 + 100) / 2 against beta's 40
    assert code == EXIT_OK and rep["result"]["value"] == "49"


def test_solve_madpe_and_refusal():
    code, rep, _ = call("solve-madpe", "--model", MODELS / "randomization.mdp", "--lambda", "2/5")
    assert code == EXIT_OK and rep["result"]["value"] == "11/10"
    code, rep, _ = call("solve-madpe", "--model", MODELS / "randomization.mdp", "--lambda", "3/5")
    assert code == EXIT_REFUSED and rep["result"]["category"] == "refused"


def test_export_qp(tmp_path):
    out = tmp_path / "q.lp"
    code, rep, _ = call("export-qp", "--model", MODELS / "randomization.mdp", "--lambda", "1/4", "--output", out)
    assert code == EXIT_OK and out.read_text().startswith("\\ riskmdp qp v1")
    assert rep["result"]["k"] == 2


def test_oracle_grid_and_budget():
    code, rep, _ = call("oracle", "grid", "--model", MODELS / "randomization.mdp", "--objective", "madpe", "--lambda", "4", "--resolution", "2")
    assert code == EXIT_OK and rep["result"]["value"] == "0"
    code, _, _ = call("oracle", "grid", "--model", MODELS / "gamble.mdp", "--objective", "vpe", "--lambda", "1", "--budget", "5")
    assert code == EXIT_BUDGET


def test_oracle_simulate_seed_from_env(monkeypatch):
    monkeypatch.setenv("RISKMDP_SEED", "11")
    _, a, _ = call("oracle", "simulate", "--model", MODELS / "small_chain.mc", "-n", "2000")
    _, b, _ = call("oracle", "simulate", "--model", MODELS / "small_chain.mc", "-n", "2000", "--seed", "11")
    assert a["result"] == b["result"] and a["result"]["seed"] == 11
    code, _, _ = call("oracle", "simulate", "--model", MODELS / "gamble.mdp", "-n", "10")
    assert code == EXIT_USAGE


@pytest.mark.parametrize("method, key, value", [("mad", "probability", "1/4"), ("crinkle", "probability", "1"), ("search", "MAD", "3/8")])
def test_reduce(method, key, value):
    code, rep, _ = call("reduce", "--chain", MODELS / "small_chain.mc", "--t", "1", "--method", method)
    assert code == EXIT_OK and rep["result"][key] == value


def test_reduce_rejects_mdp():
    assert call("reduce", "--chain", MODELS / "gamble.mdp", "--t", "1")[0] == EXIT_MODEL


def test_output_is_deterministic_apart_from_timings():
    argv = ("solve-madpe", "--model", MODELS / "gamble.mdp", "--lambda", "1/2", "--timings", "--quiet")
    _, a, err = call(*argv)
    _, b, _ = call(*argv)
    assert err == ""
    a.pop("timings_ms"), b.pop("timings_ms")
    assert a == b


def test_normalize_round_trip(tmp_path):
    out = tmp_path / "n.mdp"
    code, rep, _ = call("normalize", "--model", MODELS / "heavy_loop.mdp", "--output", out)
    assert code == EXIT_OK and rep["result"]["goal"] == "goal"
    code, rep, _ = call("validate", "--model", out)
    assert rep["result"]["ok"]
