"""Run experiment configs through the CLI and print one status line each.

    python scripts/run_experiments.py                 # every config
    python scripts/run_experiments.py wald drift      # a subset
    python scripts/run_experiments.py --out runs --workers 2
"""

import argparse
import pathlib
import sys
import time

from contactlab.cli import main

HERE = pathlib.Path(__file__).resolve().parent
STATUS = {0: "passed", 1: "error", 2: "FAILED"}


def run(argv=None) -> int:
    p = argparse.ArgumentParser()
    p.add_argument("names", nargs="*", help="config names in scripts/configs (default: all)")
    p.add_argument("--out", default="runs")
    p.add_argument("--workers", default="1")
    args = p.parse_args(argv)
    configs = sorted((HERE / "configs").glob("*.cfg"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    worst = 0
    for cfg in configs:
        t0 = time.perf_counter()
        rc = main(["--config", str(cfg), "--out", str(pathlib.Path(args.out) / cfg.stem),
                   "--workers", args.workers])
        print(f"{cfg.stem:<18} {STATUS.get(rc, rc):<7} {time.perf_counter() - t0:8.1f}s", flush=True)
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(run())
