"""Command-line entry point: ``spreliability <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from .bnb import SolveResult, solve
from .model import CutMode, RelaxationConfig, build_relaxation, write_lp_file
from .reliability import OracleLimitError, evaluate, oracle_optimize, oracle_reliability
from .spgraph import InstanceError, dumps_instance, generate, read_instance
from .validation import check_mask

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2
CSV_HEADER = ["seed", "m", "alpha", "config", "status", "incumbent", "bound", "gap", "nodes", "cuts", "time_s"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _fmt(v: float) -> str:
    return format(v, ".15g")


def _mask_str(mask) -> str:
    return "".join(str(int(b)) for b in mask)


def _build_parser() -> _Parser:
    parser = _Parser(prog="spreliability", description="Reliability-maximizing edge selection on series-parallel graphs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="emit the per-node key=value log on stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="draw a random instance")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--out", help="output path (default: stdout)")

    e = sub.add_parser("evaluate", help="reliability of one edge mask")
    e.add_argument("--instance", required=True)
    e.add_argument("--mask", required=True, help="bitstring ordered by edge id")
    e.add_argument("--trace", action="store_true", help="print the full reduction trace as JSON")

    o = sub.add_parser("oracle", help="brute-force reliability or optimum")
    o.add_argument("--instance", required=True)
    o.add_argument("--mask", help="bitstring (default: all edges)")
    o.add_argument("--optimize", action="store_true")

    s = sub.add_parser("solve", help="branch-and-cut optimum")
    s.add_argument("--instance", required=True)
    s.add_argument("--cuts", choices=[c.value for c in CutMode], default="improved")
    s.add_argument("--time-limit", type=float)
    s.add_argument("--node-limit", type=int)
    s.add_argument("--out", help="write the result JSON here (default: stdout)")
    s.add_argument("--export-lp", help="write the root relaxation in LP format")

    b = sub.add_parser("bench", help="solve a grid of generated instances")
    b.add_argument("--m", type=int, nargs="+", required=True)
    b.add_argument("--alpha", type=float, nargs="+", default=[0.8])
    b.add_argument("--seeds", type=int, default=5, help="number of seeds per (m, alpha)")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--cuts", nargs="+", choices=[c.value for c in CutMode], default=[c.value for c in CutMode])
    b.add_argument("--time-limit", type=float, default=60.0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--csv", help="output path (default: stdout)")
    return parser


def _cmd_generate(args) -> int:
    if args.m < 2:
        raise UsageError("--m must be at least 2")
    text = dumps_instance(generate(args.m, args.seed, args.alpha))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    inst = read_instance(args.instance)
    mask = check_mask(args.mask, inst.m)
    trace = evaluate(inst, mask)
    if args.trace:
        doc = {"Y": trace.Y.tolist(), "Omega": trace.Omega.tolist(), "OmegaBar": trace.OmegaBar.tolist(), "R": trace.R}
        print(json.dumps(doc))
    else:
        print(_fmt(trace.R))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    inst = read_instance(args.instance)
    if args.optimize:
        mask, value = oracle_optimize(inst)
        print(f"mask={_mask_str(mask)} reliability={_fmt(value)}")
        return EXIT_OK
    mask = check_mask(args.mask, inst.m) if args.mask else [1] * inst.m
    print(_fmt(oracle_reliability(inst, list(mask))))
    return EXIT_OK


def _cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    config = RelaxationConfig(cut_mode=args.cuts)
    if args.export_lp:
        lp, vm = build_relaxation(inst, config=config)
        write_lp_file(lp, vm, args.export_lp)
    result = solve(inst, config, args.time_limit, args.node_limit)
    text = result.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if result.optimal else EXIT_NOT_CONVERGED


def separated_cuts(result: SolveResult) -> int:
    """Cuts added during the search; model rows rebuilt per node are not counted."""
    return sum(v for k, v in result.cuts.items() if k != "local_rows")


def bench_row(seed: int, m: int, alpha: float, cuts: str, time_limit: Optional[float]) -> dict:
    inst = generate(m, seed, alpha)
    r = solve(inst, RelaxationConfig(cut_mode=cuts), time_limit)
    return {"seed": seed, "m": m, "alpha": alpha, "config": cuts, "status": r.status,
            "incumbent": repr(r.reliability), "bound": repr(r.bound), "gap": repr(r.gap), "nodes": r.nodes,
            "cuts": separated_cuts(r), "time_s": f"{r.time_s:.3f}"}


def _cmd_bench(args) -> int:
    jobs = [(args.seed + k, m, a, c, args.time_limit)
            for m in args.m for a in args.alpha for k in range(args.seeds) for c in args.cuts]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(bench_row, *zip(*jobs)))
    else:
        rows = [bench_row(*job) for job in jobs]
    order = {c.value: i for i, c in enumerate(CutMode)}
    rows.sort(key=lambda r: (r["m"], r["alpha"], r["seed"], order[r["config"]]))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK if all(r["status"] == "optimal" for r in rows) else EXIT_NOT_CONVERGED


_COMMANDS = {"generate": _cmd_generate, "evaluate": _cmd_evaluate, "oracle": _cmd_oracle,
             "solve": _cmd_solve, "bench": _cmd_bench}


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, InstanceError, OracleLimitError, ValueError, OSError) as exc:
        sys.stderr.write(f"spreliability {args.command}: {exc}\n")
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
