#!/usr/bin/env python3
"""Optimize and verify every bundled corpus program; print a summary table.

Usage: python scripts/run_corpus.py [--runs N] [--out DIR]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from seer import cli, extract, ir, validate
from seer.egraph import RunLimits


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--node-limit", type=int, default=100_000)
    ap.add_argument("--time-limit", type=float, default=60.0)
    args = ap.parse_args()

    lat, overrides, ports = cli.load_latency_config(cli.default_sched_path())
    header = (f"{'benchmark':18s} {'nodes':>7s} {'stop':>11s} {'opt_s':>6s} "
              f"{'cycles':>15s} {'area':>15s} {'valid':>6s}")
    print(header)
    print("-" * len(header))
    failures = 0
    for path in cli.corpus_paths():
        prog = ir.parse_program(path.read_bytes())
        cfg = extract.OptimizeConfig(
            latency=lat, overrides=overrides, ports=ports,
            limits=RunLimits(args.iters, args.node_limit, args.time_limit))
        t0 = time.time()
        result = extract.optimize(prog, cfg)
        opt_s = time.time() - t0
        check = validate.random_validate(prog, result.program,
                                         runs=args.runs, seed=0)
        r = result.report
        cycles = f"{r.modeled_cycles_before}->{r.modeled_cycles_after}"
        area = f"{r.modeled_area_before}->{r.modeled_area_after}"
        print(f"{Path(path).stem:18s} {r.egraph.nodes:7d} "
              f"{r.egraph.stop_reason:>11s} {opt_s:6.1f} {cycles:>15s} "
              f"{area:>15s} {str(check.equivalent):>6s}")
        failures += 0 if check.equivalent else 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
