"""Command-line front end.

Exit status: 0 on success, 1 on malformed input or usage errors, 2 when the
request is infeasible or violates a precondition of theory mode.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import baselines, bench
from .core import ConfigurationError, InfeasibleError, InputError
from .criteria import Criterion, evaluate
from .fileio import (design_record, read_fractional, read_pool, write_json, write_pool)
from .relaxation import MdConfig, STEP_MODES, solve_relaxation
from .rounding import round_fractional, select

log = logging.getLogger("expdesign")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _criterion(args) -> Criterion:
    if (args.prior_lambda is None) != (args.noise_sigma is None):
        raise InputError("--prior-lambda and --noise-sigma must be given together")
    return Criterion(args.criterion.upper(), args.prior_lambda, args.noise_sigma)


def _md_config(args) -> MdConfig:
    delta = args.delta if args.delta is not None else args.epsilon / 2
    return MdConfig(smoothing_lambda=args.smoothing, iterations=args.iterations,
                    step_mode=args.step_mode, gamma0=args.gamma0, target_delta=delta)


def _add_criterion(p):
    p.add_argument("--criterion", required=True, help="one of A, D, T, E, V, G")
    p.add_argument("--prior-lambda", type=float, help="Bayesian prior strength")
    p.add_argument("--noise-sigma", type=float, help="Bayesian noise level")


def _add_budget(p):
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--b", type=int, default=1)


def _add_relax(p):
    p.add_argument("--delta", type=float, help="relaxation accuracy (default epsilon/2)")
    p.add_argument("--smoothing", type=float, help="smoothing lambda (default delta/2)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--step-mode", choices=STEP_MODES, default="auto")
    p.add_argument("--gamma0", type=float, default=1.0)


def _add_round(p):
    p.add_argument("--mode", choices=("theory", "practical"), default="theory")
    p.add_argument("--diagnostics", help="write per-iteration diagnostics CSV here")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="expdesign", description="Select k of n design points for a criterion.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic block-diagonal pool")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", type=float, help="top Gram eigenvalue per block (default n/2)")
    g.add_argument("--out", required=True)

    r = sub.add_parser("relax", help="solve the continuous relaxation")
    _add_criterion(r)
    _add_budget(r)
    r.add_argument("--pool", required=True)
    r.add_argument("--epsilon", type=float, default=0.25)
    _add_relax(r)
    r.add_argument("--trace", help="write the iteration trace CSV here")
    r.add_argument("--out")

    rd = sub.add_parser("round", help="round a fractional design")
    _add_criterion(rd)
    rd.add_argument("--pool", required=True)
    rd.add_argument("--pi", required=True, help="fractional design JSON from 'relax'")
    rd.add_argument("--epsilon", type=float, default=0.25)
    _add_round(rd)
    rd.add_argument("--out")

    s = sub.add_parser("select", help="relax then round")
    _add_criterion(s)
    _add_budget(s)
    s.add_argument("--pool", required=True)
    s.add_argument("--epsilon", type=float, default=0.25)
    _add_relax(s)
    _add_round(s)
    s.add_argument("--out")

    bl = sub.add_parser("baseline", help="run a comparison method")
    bl.add_argument("--method", required=True,
                    choices=("uniform", "weighted", "fedorov", "greedy", "brute"))
    _add_criterion(bl)
    _add_budget(bl)
    bl.add_argument("--pool", required=True)
    bl.add_argument("--seed", type=int, default=0)
    bl.add_argument("--repeats", type=int, default=10)
    bl.add_argument("--max-changes", type=int, default=1000)
    bl.add_argument("--pi", help="fractional design for 'weighted' (default: solve it)")
    bl.add_argument("--epsilon", type=float, default=0.25)
    bl.add_argument("--out")

    bn = sub.add_parser("bench", help="compare methods on synthetic or given pools")
    bn.add_argument("--n", type=int, default=1000)
    bn.add_argument("--p", type=int, default=50)
    bn.add_argument("--pool", action="append", help="pool CSV (repeatable); default: synthetic")
    bn.add_argument("--seeds", type=int, nargs="+", default=[0])
    bn.add_argument("--criteria", nargs="+", default=["A", "D", "T", "E", "V", "G"])
    bn.add_argument("--k", type=int, nargs="+", required=True)
    bn.add_argument("--methods", nargs="+", default=list(bench.METHODS))
    bn.add_argument("--epsilon", type=float, default=0.25)
    bn.add_argument("--format", choices=("csv", "md"), default="csv")
    bn.add_argument("--out")
    return ap


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _rounded_output(args, c, design, report):
    if args.diagnostics and report.get("diagnostics") is not None:
        report["diagnostics"].to_csv(args.diagnostics)
    write_json(args.out, design_record(design, c, report["objective"],
                                       report["relaxation_objective"], report["ratio"],
                                       report["lambda_min_whitened"], report["mode"],
                                       report["alpha"]))


def _check_epsilon(args):
    if args.mode == "theory" and not 0 < args.epsilon <= 1 / 3:
        raise ConfigurationError(f"theory mode needs 0 < epsilon <= 1/3, got {args.epsilon}")


def cmd_gen(args):
    X = bench.gen_synthetic(bench.SyntheticSpec(args.n, args.p, args.seed, args.scale))
    write_pool(args.out, X)


def cmd_relax(args):
    c = _criterion(args)
    X = read_pool(args.pool)
    pi, trace = solve_relaxation(c, X, args.k, args.b, _md_config(args))
    if args.trace:
        trace.to_csv(args.trace)
    write_json(args.out, pi.to_dict())


def cmd_round(args):
    c = _criterion(args)
    _check_epsilon(args)
    X = read_pool(args.pool)
    pi = read_fractional(args.pi)
    if pi.weights.size != X.shape[0]:
        raise InputError(f"fractional design has {pi.weights.size} weights for a pool of {X.shape[0]}")
    design, report = round_fractional(X, c, pi, args.epsilon, args.mode)
    _rounded_output(args, c, design, report)


def cmd_select(args):
    c = _criterion(args)
    _check_epsilon(args)
    X = read_pool(args.pool)
    design, report = select(X, c, args.k, args.b, args.epsilon, args.mode, _md_config(args))
    _rounded_output(args, c, design, report)


def cmd_baseline(args):
    c = _criterion(args)
    X = read_pool(args.pool)
    m = args.method
    if m != "brute" and args.b != 1:
        raise InputError("sampling and local-search baselines support b = 1 only")
    rel = None
    if m == "uniform":
        d = baselines.uniform_select(X, c, args.k, args.repeats, args.seed)
    elif m == "weighted":
        pi = read_fractional(args.pi) if args.pi else \
            solve_relaxation(c, X, args.k, 1, MdConfig(target_delta=args.epsilon / 2))[0]
        rel = evaluate(c, (X.T * pi.weights) @ X, X)
        d = baselines.weighted_select(X, c, pi, args.k, args.repeats, args.seed)
    elif m == "fedorov":
        d = baselines.fedorov_exchange(X, c, args.k, args.max_changes, args.seed, fast=True)
    elif m == "greedy":
        d = baselines.greedy_removal(X, c, args.k, fast=True)
    else:
        d = baselines.brute_force(X, c, args.k, args.b)
    obj = evaluate(c, d.covariance(X), X)
    ratio = obj / rel if rel is not None and rel > 0 else None
    write_json(args.out, design_record(d, c, obj, rel, ratio, None, m, None))


def cmd_bench(args):
    if args.pool:
        pools = [read_pool(p) for p in args.pool]
        rows = bench.run_bench(pools, args.criteria, args.k, args.methods, args.seeds, args.epsilon)
    else:
        rows = []
        for seed in args.seeds:
            X = bench.gen_synthetic(bench.SyntheticSpec(args.n, args.p, seed))
            rows += bench.run_bench([X], args.criteria, args.k, args.methods, [seed], args.epsilon)
    for r in rows:
        if r.failed:
            log.warning("%s/%s k=%d seed=%d failed: %s", r.method, r.criterion, r.k, r.seed, r.error)
    _write_text(args.out, bench.emit_table(rows, args.format))


COMMANDS = {"gen": cmd_gen, "relax": cmd_relax, "round": cmd_round, "select": cmd_select,
            "baseline": cmd_baseline, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (InfeasibleError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
