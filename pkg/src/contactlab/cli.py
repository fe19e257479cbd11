"""Command-line experiment runner.

    contactlab --exp wald --lambda 1 --mu 2 --seed 7 --out runs/wald

Each run writes ``summary.json`` (deterministic given the config), a
``config.txt`` echo, ``timing.json`` and per-replication CSV files into the
output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

from . import __version__
from .config import KEYS, ExperimentConfig, UsageError, parse_config
from .ensemble import Params
from .estimators import (
    BracketError, RawTable, check_collapse, check_confinement, check_drift_lemma,
    check_duality, check_invariants, check_monotone_coupling, check_oracle_equivalence,
    check_spatial_decay, check_temporal_decay, check_wald_identity, bracket_critical_value,
    estimate_survival, velocity_compare, bracket_table,
)
from .kernel import Configuration

log = logging.getLogger("contactlab")

SCHEMA_VERSION = 1

# keys that do not change results and so stay out of summary.json
_RUN_ONLY_KEYS = ("out", "workers")


@dataclass
class Outcome:
    result: dict
    passed: bool
    raw: Dict[str, RawTable] = field(default_factory=dict)
    # name -> (x values, log p values) for plotting
    curves: Dict[str, tuple] = field(default_factory=dict)


def _params(cfg: ExperimentConfig) -> Params:
    return Params(cfg.lam, cfg.mu)


def _or(v, default):
    return default if v is None else v


def _report(rep) -> Outcome:
    return Outcome(rep.to_json(), rep.passed, dict(rep.raw))


def _curve(fit_json: dict) -> tuple:
    return fit_json["x"], fit_json["log_p"]


def run_survival(cfg):
    s = estimate_survival(_params(cfg), Configuration.eta0(), _or(cfg.horizon, 20.0),
                          _or(cfg.reps, 2000), cfg.seed, workers=cfg.workers)
    return Outcome(s.to_json(), True, {"survival": s.raw})


def run_spatial(cfg):
    n_values = [int(n) for n in _or(cfg.grid, range(1, 9))]
    rep = check_spatial_decay(_params(cfg), _or(cfg.N, (0, 5)), n_values,
                              _or(cfg.horizon, 40.0), _or(cfg.reps, 50000), cfg.seed,
                              k=cfg.tolerance_k, workers=cfg.workers)
    out = _report(rep)
    out.curves = {name: _curve(f) for name, f in rep.values["fits"].items()}
    return out


def run_temporal(cfg):
    rep = check_temporal_decay(_params(cfg), list(_or(cfg.grid, range(2, 17, 2))),
                               _or(cfg.reps, 50000), cfg.seed, workers=cfg.workers)
    out = _report(rep)
    out.curves = {"temporal": _curve(rep.values["fit"])}
    return out


def run_confinement(cfg):
    return _report(check_confinement(_params(cfg), _or(cfg.N, (0, 4, 8)), _or(cfg.reps, 5000),
                                     _or(cfg.horizon, 20.0), cfg.seed, k=cfg.tolerance_k,
                                     workers=cfg.workers))


def run_drift(cfg):
    return _report(check_drift_lemma(_params(cfg), list(_or(cfg.grid, (1.0, 5.0, 10.0))),
                                     _or(cfg.reps, 5000), cfg.truncation_L, cfg.seed,
                                     k=cfg.tolerance_k, workers=cfg.workers))


def run_wald(cfg):
    return _report(check_wald_identity(_params(cfg), _or(cfg.horizon, 50.0), _or(cfg.reps, 2000),
                                       cfg.truncation_L, cfg.seed, k=cfg.tolerance_k,
                                       workers=cfg.workers))


def run_velocity(cfg):
    return _report(velocity_compare(_params(cfg), _or(cfg.horizon, 200.0), _or(cfg.reps, 400),
                                    cfg.truncation_L, cfg.seed, k=cfg.tolerance_k,
                                    workers=cfg.workers, bracket_reps=_or(cfg.bracket_reps, 200),
                                    bracket_tolerance=cfg.bracket_tol))


def run_duality(cfg):
    radius = _or(cfg.N, (2,))[0]
    return _report(check_duality(cfg.mu, [0], list(range(-radius, radius + 1)),
                                 _or(cfg.horizon, 3.0), _or(cfg.reps, 20000), cfg.seed,
                                 k=cfg.tolerance_k, workers=cfg.workers))


def run_invariants(cfg):
    return _report(check_invariants(_params(cfg), _or(cfg.horizon, 5.0), _or(cfg.reps, 1000),
                                    cfg.seed, workers=cfg.workers, L=cfg.truncation_L))


def run_collapse(cfg):
    mus = _or(cfg.grid, (0.5, 1.5))
    return _report(check_collapse(mus, _or(cfg.horizon, 10.0), _or(cfg.reps, 1000), cfg.seed,
                                  workers=cfg.workers))


def run_monotone(cfg):
    return _report(check_monotone_coupling(_params(cfg), _or(cfg.N, (2,))[0],
                                           _or(cfg.horizon, 10.0), _or(cfg.reps, 1000),
                                           cfg.seed, workers=cfg.workers))


def run_oracle(cfg):
    w = _or(cfg.N, (20,))[0]
    return _report(check_oracle_equivalence(cfg.mu, (-w, w, _or(cfg.horizon, 5.0)),
                                            _or(cfg.reps, 500), cfg.seed, workers=cfg.workers))


def run_bracket(cfg):
    b = bracket_critical_value(True, _or(cfg.interval, (0.2, 10.0)), _or(cfg.horizon, 100.0),
                               _or(cfg.reps, 1000), cfg.bracket_tol, cfg.seed,
                               workers=cfg.workers)
    return Outcome(b, True, {"bracket": bracket_table(b)})


REGISTRY: Dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "survival": run_survival,
    "spatial-decay": run_spatial,
    "temporal-decay": run_temporal,
    "confinement": run_confinement,
    "drift": run_drift,
    "wald": run_wald,
    "velocity-compare": run_velocity,
    "duality": run_duality,
    "invariants": run_invariants,
    "bracket-mu-c": run_bracket,
    "collapse": run_collapse,
    "monotone-coupling": run_monotone,
    "oracle": run_oracle,
}


def _clean(v):
    # strict JSON: non-finite floats become null
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def summary_bytes(cfg: ExperimentConfig, outcome: Outcome) -> bytes:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "contactlab", "version": __version__},
        "experiment": cfg.experiment,
        "config": {k: v for k, v in cfg.as_items() if k not in _RUN_ONLY_KEYS},
        "passed": outcome.passed,
        "result": outcome.result,
    }
    return (json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n").encode()


def write_outputs(cfg: ExperimentConfig, outcome: Outcome, runtime: float) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "summary.json"), "wb") as fh:
        fh.write(summary_bytes(cfg, outcome))
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.echo())
    with open(os.path.join(cfg.out, "timing.json"), "w") as fh:
        json.dump({"runtime_seconds": runtime, "workers": cfg.workers}, fh, indent=2)
        fh.write("\n")
    for name, table in outcome.raw.items():
        if table is not None:
            table.write_csv(os.path.join(cfg.out, f"raw_{_slug(name)}.csv"))
    for name, (xs, lps) in outcome.curves.items():
        with open(os.path.join(cfg.out, f"x_log_p_{_slug(name)}.csv"), "w") as fh:
            fh.write("x,log_p\n")
            for x, lp in zip(xs, lps):
                if lp is not None:
                    fh.write(f"{x!r},{lp!r}\n")


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run, write outputs, and return 0 (all assertions pass) or 2 (some fail)."""
    if cfg.experiment not in REGISTRY:
        raise UsageError("exp", f"unknown experiment {cfg.experiment!r}; "
                                f"choose from {', '.join(REGISTRY)}")
    t0 = time.perf_counter()
    outcome = REGISTRY[cfg.experiment](cfg)
    runtime = time.perf_counter() - t0
    write_outputs(cfg, outcome, runtime)
    log.info("%s finished in %.1fs, %s", cfg.experiment, runtime,
             "passed" if outcome.passed else "FAILED")
    return 0 if outcome.passed else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactlab", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="flat key = value file; flags override its values")
    for key in KEYS:
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None, metavar="VALUE")
    p.add_argument("--list", action="store_true", help="list experiments and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list:
        print("\n".join(REGISTRY))
        return 0
    flags = {key: getattr(args, key.replace("-", "_")) for key in KEYS}
    try:
        cfg = parse_config(args.config, flags)
        return run_experiment(cfg)
    except (UsageError, BracketError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
