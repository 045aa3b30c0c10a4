#!/usr/bin/env python3
"""Reproduce the fusion-choice study on the three-loop example.

For two opaque-function latency assignments, prints the modeled total
latency of the unfused program and of each single-fusion alternative, then
runs the optimizer and reports which shape it emits.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from seer import extract, ir, sched
from seer.cli import corpus_dir
from seer.sched import fuse_constraints, loop_latency

CASES = [("case 1", {"f": 10, "g": 100, "h": 1}),
         ("case 2", {"f": 1, "g": 100, "h": 10})]


def main():
    prog = ir.parse_program((corpus_dir() / "motivating.seer").read_bytes())
    for name, funcs in CASES:
        lat = sched.LatencyTable(funcs=funcs)
        table = sched.seed_schedule(prog, lat)
        l1, l2, l3 = table["loop_1"], table["loop_2"], table["loop_3"]
        totals = {
            "unfused": loop_latency(l1) + loop_latency(l2) + loop_latency(l3),
            "fuse 1+2": loop_latency(fuse_constraints(l1, l2)) + loop_latency(l3),
            "fuse 2+3": loop_latency(l1) + loop_latency(fuse_constraints(l2, l3)),
        }
        print(f"{name} (f={funcs['f']}, g={funcs['g']}, h={funcs['h']}):")
        for shape, cycles in totals.items():
            marker = "  <- best" if cycles == min(totals.values()) else ""
            print(f"  {shape:10s} {cycles:6d} modeled cycles{marker}")
        result = extract.optimize(prog, extract.OptimizeConfig(latency=lat))
        loops = [t.label for t in ir.subterms(result.program)
                 if isinstance(t, ir.For)]
        print(f"  optimizer emits: {loops}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
