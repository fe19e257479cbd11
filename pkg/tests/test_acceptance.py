"""Acceptance criteria at full scale, one test per criterion.

Each test prints ``criterion N: PASS|FAIL`` with its key numbers and runtime;
the lines are collected again in the terminal summary.
"""

import time

import pytest

from conftest import ACCEPTANCE_LINES
from contactlab.cli import main
from contactlab.ensemble import Params
from contactlab.estimators import (
    check_collapse, check_drift_lemma, check_duality, check_monotone_coupling,
    check_oracle_equivalence, check_spatial_decay, check_temporal_decay, check_wald_identity,
    velocity_compare,
)

SEED = 20261014


def _run(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _report(number, title, passed, elapsed, budget, detail=""):
    ok = passed and elapsed < budget
    line = (f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}  "
            f"[{elapsed:.1f}s of {budget:.0f}s]  {detail}")
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def _failed(rep):
    return ", ".join(a.name for a in rep.assertions if not a.passed) or "none"


def _check(number, title, rep, elapsed, budget, detail=""):
    ok = _report(number, title, rep.passed, elapsed, budget,
                 detail + f" failed: {_failed(rep)}")
    assert rep.passed, [a for a in rep.assertions if not a.passed]
    assert elapsed < budget


def test_01_collapse():
    rep, dt = _run(check_collapse, (0.5, 1.5), 10.0, 1000, SEED)
    _check(1, "collapse at lambda = mu", rep, dt, 60)


def test_02_monotone_coupling():
    rep, dt = _run(check_monotone_coupling, Params(1.0, 2.0), 2, 10.0, 1000, SEED)
    _check(2, "monotone coupling eta0 <= eta_N(2)", rep, dt, 60,
           f"violations={rep.values['violations']}")


def test_03_oracle_equivalence():
    rep, dt = _run(check_oracle_equivalence, 1.5, (-20, 20, 5.0), 500, SEED,
                   sandwich=Params(1.0, 2.0))
    _check(3, "graph oracle and sandwich", rep, dt, 120, f"violations={rep.values['violations']}")


def test_04_duality():
    rep, dt = _run(check_duality, 1.5, [0], [-2, -1, 0, 1, 2], 3.0, 20000, SEED)
    v = rep.values
    _check(4, "self-duality", rep, dt, 120,
           f"p1={v['forward']:.4f} p2={v['reverse']:.4f} se={v['pooled_se']:.4f}")


def test_05_spatial_decay():
    rep, dt = _run(check_spatial_decay, Params(0.5, 0.5), (0, 5), range(1, 9), 40.0, 50000, SEED)
    fits = rep.values["fits"]
    comp = rep.values["comparisons"]["slopes_agree_N=0_vs_N=5"]
    _check(5, "subcritical spatial decay", rep, dt, 300,
           f"slope N=0 {fits['N=0']['slope']:.4f} (R2 {fits['N=0']['r_squared']:.4f}), "
           f"N=5 {fits['N=5']['slope']:.4f} (R2 {fits['N=5']['r_squared']:.4f}), "
           f"diff {comp['difference']:.4f} vs 3*se {3 * comp['pooled_se']:.4f}")


def test_06_temporal_decay():
    rep, dt = _run(check_temporal_decay, Params(0.5, 0.5), list(range(2, 17, 2)), 50000, SEED)
    f = rep.values["fit"]
    _check(6, "subcritical temporal decay", rep, dt, 300,
           f"slope {f['slope']:.4f} R2 {f['r_squared']:.4f}")


def test_07_drift_lemma():
    rep, dt = _run(check_drift_lemma, Params(1.5, 1.5), [1.0, 5.0, 10.0], 5000, None, SEED)
    means = ", ".join(f"t={p['t']:g}: {p['mean']:.3f}+-{p['se']:.3f}" for p in rep.values["per_t"])
    _check(7, "drift lemma", rep, dt, 180, means)


def test_08_wald_identity():
    rep, dt = _run(check_wald_identity, Params(1.0, 2.0), 50.0, 2000, None, SEED)
    v = rep.values
    _check(8, "Wald identity", rep, dt, 300,
           f"mean F {v['mean_F']:.3f} mean xbar {v['mean_xbar']:.3f}")


def test_09_velocity_comparison():
    rep, dt = _run(velocity_compare, Params(1.5, 2.5), 200.0, 400, None, SEED, bracket_reps=200)
    v = rep.values
    _check(9, "velocity comparison", rep, dt, 600,
           f"alpha {v['alpha']['estimate']:.4f} ratio*beta {v['ratio_beta']:.4f} "
           f"pooled se {v['pooled_se']:.4f} bracket {v['bracket'] and v['bracket']['interval']}")


def test_10_determinism_across_workers(tmp_path):
    t0 = time.perf_counter()
    args = ["--exp", "duality", "--mu", "1.5", "--horizon", "3", "--reps", "20000", "--N", "2",
            "--seed", str(SEED)]
    a, b = tmp_path / "w1", tmp_path / "w2"
    assert main(args + ["--workers", "1", "--out", str(a)]) == 0
    assert main(args + ["--workers", "2", "--out", str(b)]) == 0
    same = (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    dt = time.perf_counter() - t0
    _report(10, "byte-identical summary.json for 1 and 2 workers", same, dt, 120)
    assert same
