"""Command-line driver.

Subcommands:
    seer opt INPUT [flags]        optimize one program, write outputs
    seer verify ORIGINAL OPTIMIZED [flags]
    seer stats [INPUT...]         e-graph size/time table over the corpus
    seer rules list               dump the rewrite catalog

Exit codes: 0 success, 1 configuration/usage error, 2 rewrite-stage error,
3 validation failure.  Outputs are deterministic for a fixed seed: the
report written by `opt` nulls out wall-clock fields.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

from . import extract, ir, rewrites, sched, validate
from .egraph import RunLimits

log = logging.getLogger("seer")


class ConfigError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("SEER_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")


def _load_config_file(path):
    text = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        return toml.loads(text.decode("utf-8"))
    return json.loads(text)


def corpus_dir():
    return resources.files("seer") / "corpus"


def default_sched_path():
    return corpus_dir() / "sched.json"


def load_latency_config(path):
    """Build the latency table plus overrides/ports from a config file."""
    raw = _load_config_file(path)
    table = sched.LatencyTable()
    for key, cycles in raw.get("latency", {}).items():
        if key in ir.OP_ARITY:
            table.ops[key] = int(cycles)
        elif key == "load":
            table.load = int(cycles)
        elif key == "store":
            table.store = int(cycles)
        else:
            table.funcs[key] = int(cycles)
    overrides = {}
    for label, entry in raw.get("overrides", {}).items():
        overrides[label] = (int(entry["P"]), int(entry["l"]))
    ports = {k: int(v) for k, v in raw.get("ports", {}).items()}
    return table, overrides, ports


def load_area_config(path):
    raw = _load_config_file(path)
    model = extract.AreaModel()
    for kind, coeffs in raw.items():
        if not isinstance(coeffs, (list, tuple)) or len(coeffs) != 3:
            raise ConfigError(f"area entry for {kind!r} must be [c0, c1, c2]")
        model.table[kind] = tuple(float(c) for c in coeffs)
    return model


def _add_common_flags(p):
    p.add_argument("--sched", metavar="PATH", default=None,
                   help="schedule config (JSON/TOML); defaults to the bundled corpus config")
    p.add_argument("--area", metavar="PATH", default=None,
                   help="area model config (JSON/TOML)")
    p.add_argument("--iters", type=int, default=30, metavar="N")
    p.add_argument("--node-limit", type=int, default=100_000, metavar="N")
    p.add_argument("--time-limit", type=float, default=60.0, metavar="SECS")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("--disable-control", action="store_true")
    p.add_argument("--disable-datapath", action="store_true")
    p.add_argument("--no-pipeline", action="store_true")
    p.add_argument("--unroll-threshold", type=int, default=64, metavar="N")
    p.add_argument("--out", metavar="DIR", default="seer-out")
    p.add_argument("--runs", type=int, default=1000, metavar="N",
                   help="randomized validation runs for the self-check")
    p.add_argument("--strict", action="store_true",
                   help="fail (exit 3) when the proof chain cannot be emitted")


def build_config(args):
    if args.disable_control and args.disable_datapath:
        raise ConfigError("--disable-control and --disable-datapath together "
                          "leave nothing to explore")
    if args.iters < 1 or args.node_limit < 1 or args.time_limit <= 0:
        raise ConfigError("limits must be positive")
    sched_path = args.sched or default_sched_path()
    latency, overrides, ports = load_latency_config(sched_path)
    area = load_area_config(args.area) if args.area else extract.AreaModel()
    return extract.OptimizeConfig(
        latency=latency, area=area, overrides=overrides, ports=ports,
        limits=RunLimits(args.iters, args.node_limit, args.time_limit),
        disable_control=args.disable_control,
        disable_datapath=args.disable_datapath,
        pipelined=not args.no_pipeline,
        unroll_threshold=args.unroll_threshold,
        seed=args.seed,
    )


def _optimize_file(path, config):
    prog = ir.parse_program(Path(path).read_bytes())
    return prog, extract.optimize(prog, config)


def cmd_optimize(args):
    try:
        config = build_config(args)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        prog = ir.parse_program(Path(args.input).read_bytes())
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ir.ParseError, ir.NormalizeError) as e:
        print(f"error: {args.input}: {e}", file=sys.stderr)
        return 1

    try:
        result = extract.optimize(prog, config)
    except Exception as e:  # rewrite/extraction stage
        log.exception("optimization failed")
        print(f"rewrite-stage error: {e}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    opt_path = out / f"{stem}.opt.seer"
    opt_text = ir.print_program(result.program)
    opt_path.write_text(opt_text)

    # Self-check: the optimized program must behave like the input.
    check = validate.random_validate(prog, result.program,
                                     runs=args.runs, seed=args.seed)
    chain_len = 0
    chain_error = None
    if check.equivalent:
        try:
            chain = validate.emit_proof_chain(result.trace, prog, result.program,
                                              seed=args.seed)
            chain_dir = out / f"{stem}_proof"
            chain_dir.mkdir(exist_ok=True)
            for i, (text, rule) in enumerate(chain.steps):
                header = f"; step {i}" + (f": {rule}" if rule else ": input")
                (chain_dir / f"step_{i:03d}.seer").write_text(header + "\n" + text)
            chain_len = len(chain)
        except validate.ChainError as e:
            chain_error = str(e)

    report = result.report.to_dict(include_elapsed=False)
    report["validation"] = check.to_json()
    report["chain_len"] = chain_len
    if chain_error:
        report["chain_error"] = chain_error
    (out / f"{stem}.report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")

    print(f"{args.input}: cycles {report['modeled_cycles_before']} -> "
          f"{report['modeled_cycles_after']}, area {report['modeled_area_before']}"
          f" -> {report['modeled_area_after']} ({report['egraph']['stop_reason']})")
    if not check.equivalent:
        print("validation FAILED; counterexample in report", file=sys.stderr)
        return 3
    if chain_error and args.strict:
        print(f"proof chain error: {chain_error}", file=sys.stderr)
        return 3
    return 0


def cmd_verify(args):
    try:
        p = ir.parse_program(Path(args.original).read_bytes())
        q = ir.parse_program(Path(args.optimized).read_bytes())
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ir.ParseError, ir.NormalizeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        result = validate.random_validate(p, q, runs=args.runs, seed=args.seed)
    except (ValueError, validate.InterpError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    chain_len = 0
    if args.chain:
        steps = sorted(Path(args.chain).glob("step_*.seer"))
        chain_len = len(steps)
        if steps:
            programs = [ir.parse_program(s.read_bytes()) for s in steps]
            if programs[0] != p or programs[-1] != q:
                print("error: chain endpoints do not match the programs",
                      file=sys.stderr)
                return 1
            for a, b in zip(programs, programs[1:]):
                adj = validate.random_validate(a, b, runs=min(args.runs, 100),
                                               seed=args.seed)
                if not adj.equivalent:
                    result = adj
                    break

    payload = {"runs": args.runs, "equivalent": result.equivalent,
               "chain_len": chain_len}
    if result.counterexample is not None:
        payload["counterexample"] = result.counterexample
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0 if result.equivalent else 3


def corpus_paths():
    return sorted(p for p in corpus_dir().iterdir() if p.name.endswith(".seer"))


def cmd_stats(args):
    try:
        config = build_config(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    paths = [Path(p) for p in args.inputs] if args.inputs else corpus_paths()
    if not paths:
        print("error: no corpus entries found", file=sys.stderr)
        return 1
    header = f"{'benchmark':20s} {'nodes':>8s} {'classes':>8s} {'iters':>6s} " \
             f"{'stop':>12s} {'time_s':>8s}"
    print(header)
    print("-" * len(header))
    failures = 0
    for path in paths:
        try:
            _, result = _optimize_file(path, config)
            rr = result.report.egraph
            print(f"{Path(path).stem:20s} {rr.nodes:8d} {rr.classes:8d} "
                  f"{rr.iterations:6d} {rr.stop_reason:>12s} "
                  f"{rr.elapsed_ms / 1000.0:8.2f}")
        except Exception as e:
            failures += 1
            print(f"{Path(path).stem:20s} error: {e}")
    return 0 if failures == 0 else 2


def cmd_rules(args):
    if args.action != "list":
        print("error: unknown rules action (expected `list`)", file=sys.stderr)
        return 1
    print(rewrites.rule_listing())
    return 0


def main(argv=None):
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="seer",
        description="super-optimizer for a small hardware-oriented loop language")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("opt", help="optimize a program")
    p_opt.add_argument("input")
    _add_common_flags(p_opt)
    p_opt.set_defaults(fn=cmd_optimize)

    p_ver = sub.add_parser("verify", help="randomized equivalence check")
    p_ver.add_argument("original")
    p_ver.add_argument("optimized")
    p_ver.add_argument("--runs", type=int, default=1000, metavar="N")
    p_ver.add_argument("--seed", type=int, default=0, metavar="N")
    p_ver.add_argument("--chain", metavar="DIR", default=None,
                       help="proof chain directory to re-validate")
    p_ver.add_argument("--strict", action="store_true")
    p_ver.set_defaults(fn=cmd_verify)

    p_stats = sub.add_parser("stats", help="e-graph stats over the corpus")
    p_stats.add_argument("inputs", nargs="*")
    _add_common_flags(p_stats)
    p_stats.set_defaults(fn=cmd_stats)

    p_rules = sub.add_parser("rules", help="rewrite catalog")
    p_rules.add_argument("action")
    p_rules.set_defaults(fn=cmd_rules)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
