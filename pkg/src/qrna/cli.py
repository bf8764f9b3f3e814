"""Command-line front end: ``qrna run|routes|check-tables|oracle``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import oracle
from .engine import DETERMINISTIC, STOCHASTIC
from .errors import QrnaError
from .harness import Scenario, bundled, check_tables, routes, run
from .requests import fmt_float


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_run(args):
    scenario = Scenario.load(args.scenario)
    result = run(scenario, topology=args.topology, seed=args.seed, mode=args.mode)
    if args.trace:
        _write(args.trace, result.trace)
    _write(args.report or "-", result.report)
    return 0 if result.all_ok else 1


def cmd_routes(args):
    sys.stdout.write(routes(args.topology))
    return 0


def cmd_check_tables(args):
    golden = args.golden or [bundled("table_node11.golden"), bundled("table_node51.golden")]
    diff = check_tables(args.topology, golden)
    if diff:
        sys.stdout.write(diff)
        return 1
    print("tables match")
    return 0


def cmd_oracle(args):
    reg, deliveries = oracle.replay(Path(args.trace).read_text(), cap=args.cap)
    print("request\tstatus\treported_f\toracle_f\treported_s\toracle_s\tqubits")
    worst = 0.0
    for d in deliveries:
        f = "-" if d.f is None else fmt_float(d.f)
        s = "-" if d.s is None else fmt_float(d.s)
        print(f"{d.request}\t{d.status}\t{fmt_float(d.reported_f)}\t{f}\t"
              f"{fmt_float(d.reported_s)}\t{s}\t{';'.join(d.labels)}")
        if d.f is not None:
            worst = max(worst, abs(d.f - d.reported_f), abs(d.s - d.reported_s))
    total = sum(b.p0 + b.p1 for b in reg.branches)
    print(f"# measurements={len(reg.branches)} branch_sum_error="
          f"{fmt_float(abs(total - len(reg.branches)))} peak_qubits={reg.peak} "
          f"max_deviation={fmt_float(worst)}")
    return 0 if worst <= 1e-9 else 1


def build_parser():
    p = argparse.ArgumentParser(prog="qrna", description="Recursive quantum network simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario and write trace and report")
    r.add_argument("--topology", help="topology file (default: the scenario's own)")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=_seed)
    r.add_argument("--mode", choices=[DETERMINISTIC, STOCHASTIC])
    r.add_argument("--trace", help="trace output file, '-' for stdout")
    r.add_argument("--report", help="report output file (default stdout)")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("routes", help="print routing tables for every node")
    t.add_argument("--topology", required=True)
    t.set_defaults(func=cmd_routes)

    c = sub.add_parser("check-tables", help="compare routing tables with golden files")
    c.add_argument("--topology", required=True)
    c.add_argument("--golden", nargs="+", help="golden files (default: bundled tables)")
    c.set_defaults(func=cmd_check_tables)

    o = sub.add_parser("oracle", help="replay a trace on the flat reference simulator")
    o.add_argument("--trace", required=True)
    o.add_argument("--cap", type=int, default=oracle.ORACLE_CAP)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QrnaError, OSError) as exc:
        print(f"qrna: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
