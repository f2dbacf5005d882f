"""Command line driver: ``gmdual solve [flags] instance.dd``."""

from __future__ import annotations

import argparse
import math
import sys

from .engine import SolveOptions
from .errors import (
    GraphMatchingError,
    Infeasible,
    InfeasibleAssignment,
    InstanceSyntaxError,
    NoFeasibleLabel,
    NotBijective,
    TooLarge,
)
from .instance import has_injective_labeling, load_instance, parse_instance
from .oracle import brute_force
from .relaxations import METHODS
from .solver import solve

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; usage errors are 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gmdual", description="Dual ascent solvers for graph matching.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("solve", help="solve one instance file ('-' reads stdin)")
    s.add_argument("instance")
    s.add_argument("--method", default="amp-o", choices=METHODS, type=str.lower)
    s.add_argument("--max-iter", type=_positive_int, default=1000)
    s.add_argument("--gap-tol", type=float, default=1e-8)
    s.add_argument("--round-every", type=_positive_int, default=5)
    s.add_argument("--tighten", choices=("on", "off"), default="on")
    s.add_argument("--tighten-budget", type=_positive_int, default=50)
    s.add_argument("--seed", type=int, default=0,
                   help="reserved, the pipeline is deterministic")
    s.add_argument("--output", "-o", help="write the solution to this file")
    s.add_argument("--oracle", action="store_true",
                   help="also enumerate the exact optimum (tiny instances only)")
    return p


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def write_solution(fh, inst, labels, value):
    for u, s in enumerate(labels):
        fh.write(f"{inst.node_ids[u]} {inst.label_ids[int(s)]}\n")
    fh.write(f"# energy {_fmt(value)}\n")


def _solve(args, out) -> int:
    if args.instance == "-":
        inst = parse_instance(sys.stdin.buffer.read(), source="<stdin>")
    else:
        inst = load_instance(args.instance)
    if not has_injective_labeling(inst):
        raise Infeasible("no injective labeling exists for this instance")
    opts = SolveOptions(
        max_iter=args.max_iter,
        gap_tol=args.gap_tol,
        round_every=args.round_every,
        tighten=args.tighten == "on",
        tighten_budget=args.tighten_budget,
    )

    def progress(it, t, lb, ub):
        print(f"iter={it} t={t:.6f} lb={_fmt(lb)} ub={_fmt(ub)}", file=out, flush=True)

    res = solve(inst, args.method, opts, progress)
    print(f"method {res.method}", file=out)
    print(f"lower bound {_fmt(res.lower_bound)}", file=out)
    print(f"upper bound {_fmt(res.upper_bound)}", file=out)
    print(f"gap {_fmt(res.gap)}", file=out)
    print(f"wall time {res.elapsed:.6f}", file=out)
    print(f"iterations {res.iterations}", file=out)
    if args.oracle:
        best = brute_force(inst)
        print(f"oracle optimum {_fmt(best.energy)}", file=out)
    labels = res.assignment.labels
    if args.output:
        with open(args.output, "w") as fh:
            write_solution(fh, inst, labels, res.assignment.energy)
    else:
        write_solution(out, inst, labels, res.assignment.energy)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return _solve(args, out)
    except InstanceSyntaxError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TooLarge as e:
        print(f"error: --oracle: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NotBijective, Infeasible, InfeasibleAssignment, NoFeasibleLabel) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GraphMatchingError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
