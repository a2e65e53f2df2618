"""Command-line front end: ``falbp {gen,solve,bench,certify,trace}``.

Exit codes: 0 ok, 2 usage or bad input, 3 numerical abort, 4 a
safeguard iteration cap was hit.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .apg import NumericalError
from .bench import SUITES, BenchSuiteSpec, log_linear_fit, rate_trace, run_suite
from .certify import duality_gap_certificate, unique_solution_certificate
from .denoise import denoise_solve
from .fal import FalConfig, ZeroMeasurementError, fal_solve, fal_solve_theoretical
from .probgen import SignalSpec, generate, parse_plan, sparsity_for
from .storage import (FormatError, dumps_json, load_instance, read_vector, save_instance, sci,
                      write_json, write_vector)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4

METRIC_COLUMNS = ("N_FAL", "N_APG", "nMat", "stop_reason", "residual", "x_sol_l1", "x_true_l1",
                  "rel_l1_gap", "inf_err_plus", "inf_err_zero", "rel_l2_error", "nnz")


class UsageError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0), help="base random seed")
    parser.add_argument("--out", default=d(None), help="output path")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads for bench cells")
    parser.add_argument("--format", choices=("csv", "json"), default=d("csv"),
                        help="stdout format")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="falbp", description="Basis pursuit by a first-order "
                                "augmented Lagrangian method.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate an instance directory")
    g.add_argument("--family", required=True,
                   choices=("dct-100db", "gaussian-noisy", "hard-magnitude", "hard"))
    g.add_argument("--n", type=int, help="signal length (default 4096, or 512 for hard)")
    g.add_argument("--m", type=int, help="measurements (default n/4)")
    g.add_argument("--s", type=int, help="nonzeros (default m/100, or the plan total)")
    g.add_argument("--snr-db", type=float, help="SNR for gaussian-noisy")
    g.add_argument("--plan", help='magnitude plan for hard, e.g. "1e5:33,1:5"')

    s = sub.add_parser("solve", parents=[common], help="solve an instance")
    s.add_argument("instance")
    s.add_argument("--mode", choices=("bp", "bpdn"), default="bp")
    s.add_argument("--stop", choices=("noiseless", "oracle", "noisy"))
    s.add_argument("--gamma", type=float, help="stop tolerance")
    s.add_argument("--delta", type=float, help="residual radius for bpdn (default from instance)")
    s.add_argument("--gamma-norm", choices=("1", "2", "inf"), default="2",
                   help="norm of the bpdn residual constraint")
    s.add_argument("--hard-start", action="store_true",
                   help="first-iteration coefficients for hard instances (0.8/0.8/1.9)")
    s.add_argument("--squared-subgradient", action="store_true")
    s.add_argument("--long-steps", choices=("auto", "on", "off"), default="auto")
    s.add_argument("--theoretical", action="store_true", help="geometric schedule with bound audit")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--eps-target", type=float, default=1e-3)
    s.add_argument("--max-outer", type=int, default=200)
    s.add_argument("--max-apg", type=int, default=1_000_000)
    s.add_argument("--certify", action="store_true", help="attach a duality-gap certificate")

    b = sub.add_parser("bench", parents=[common], help="run a benchmark suite")
    b.add_argument("--suite", required=True, choices=SUITES)
    b.add_argument("--sizes", type=int, nargs="+", default=[])
    b.add_argument("--gammas", type=float, nargs="+", default=[])
    b.add_argument("--snrs", type=float, nargs="+", default=[40.0, 30.0, 20.0])
    b.add_argument("--seeds", type=int, default=10, help="number of seeds")

    c = sub.add_parser("certify", parents=[common], help="certificates for a solution")
    c.add_argument("instance")
    c.add_argument("--solution", help="x_sol.bin from solve")
    c.add_argument("--theta", help="theta.bin from solve")
    c.add_argument("--unique", action="store_true",
                   help="certify that the true signal is the unique l1 minimizer")

    t = sub.add_parser("trace", parents=[common], help="per-iteration convergence data")
    t.add_argument("instance")
    t.add_argument("--gamma", type=float, default=5e-11)
    t.add_argument("--stop", choices=("noiseless", "oracle"), default="noiseless")
    return p


def _config(args) -> FalConfig:
    stop = args.stop or ("noisy" if args.mode == "bpdn" else "noiseless")
    gamma = args.gamma
    if gamma is None:
        gamma = 1e-6 if stop == "noisy" else 1e-2
    long_steps = {"auto": None, "on": True, "off": False}[args.long_steps]
    kw = dict(gamma=gamma, stop_mode=stop, squared_subgradient=args.squared_subgradient,
              long_steps=long_steps, max_outer=args.max_outer, max_apg_total=args.max_apg,
              alpha=args.alpha)
    return FalConfig.hard(**kw) if args.hard_start else FalConfig(**kw)


def cmd_gen(args) -> int:
    family = "hard-magnitude" if args.family == "hard" else args.family
    plan = parse_plan(args.plan) if args.plan else None
    if family == "hard-magnitude" and not plan:
        raise UsageError("--family hard needs --plan")
    if family != "hard-magnitude" and plan:
        raise UsageError("--plan applies only to --family hard")
    if family == "gaussian-noisy" and args.snr_db is None:
        raise UsageError("--family gaussian-noisy needs --snr-db")
    n = args.n or (512 if family == "hard-magnitude" else 4096)
    m = args.m or n // 4
    s = args.s
    if s is None:
        s = sum(c for _, c in plan) if plan else sparsity_for(m, "sparse")
    spec = SignalSpec(family, n, m, s, args.seed, snr_db=args.snr_db, magnitude_plan=plan)
    inst = generate(spec)
    out = args.out or f"instance-{family}-n{n}-m{m}-s{s}-seed{args.seed}"
    digest = save_instance(inst, out)
    info = {"digest": digest, "x_true_l1": float(np.abs(inst.x_true).sum()), "s": s, "path": out}
    if args.format == "json":
        sys.stdout.write(dumps_json(info))
    else:
        print(f"digest={digest} x_true_l1={info['x_true_l1']:.17g} s={s} path={out}")
    return EXIT_OK


def _metric_line(report) -> tuple[str, str]:
    vals = {"N_FAL": report.n_fal, "N_APG": report.n_apg, "nMat": report.n_mat,
            "stop_reason": report.stop_reason, **report.metrics}
    cells = [v if isinstance(v, str) else sci(v) for v in (vals.get(k) for k in METRIC_COLUMNS)]
    return ",".join(METRIC_COLUMNS), ",".join("" if c is None else c for c in cells)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if args.theoretical and args.mode != "bp":
        raise UsageError("--theoretical applies to --mode bp only")
    if args.mode == "bp" and (args.delta is not None or args.gamma_norm != "2"):
        raise UsageError("--delta and --gamma-norm apply to --mode bpdn only")
    config = _config(args)
    if config.stop_mode == "oracle" and inst.x_true is None:
        raise UsageError("--stop oracle needs an instance with x_true")
    s_sol = None
    if args.theoretical:
        x, report, _ = fal_solve_theoretical(inst, args.alpha, args.eps_target, config=config)
    elif args.mode == "bp":
        x, report = fal_solve(inst, config)
    else:
        delta = args.delta if args.delta is not None else inst.delta
        if delta is None:
            raise UsageError("instance has no delta; pass --delta")
        x, s_sol, report = denoise_solve(inst, delta, args.gamma_norm, config)
    theta = report.extra.pop("theta")
    if args.certify:
        if args.mode == "bpdn":
            raise UsageError("--certify applies to --mode bp")
        report.extra["certificate"] = duality_gap_certificate(x, theta, inst).to_dict()
    out = Path(args.out or Path(args.instance) / "solution")
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report.to_dict())
    write_vector(out / "x_sol.bin", x)
    write_vector(out / "theta.bin", theta)
    if s_sol is not None:
        write_vector(out / "s_sol.bin", s_sol)
    header, line = _metric_line(report)
    (out / "metrics.csv").write_text(header + "\n" + line + "\n")
    if args.format == "json":
        sys.stdout.write(dumps_json(report.to_dict()))
    else:
        print(header)
        print(line)
    return EXIT_CAP if report.cap_exceeded else EXIT_OK


def cmd_bench(args) -> int:
    try:
        spec = BenchSuiteSpec(args.suite, list(args.sizes), list(args.gammas), args.seeds,
                              args.out or f"bench-{args.suite}", args.seed, args.threads,
                              list(args.snrs))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tables = run_suite(spec)
    rows = [r for cols in tables.values() for rs in cols.values() for r in rs]
    summary = {"suite": spec.suite, "output_dir": spec.output_dir, "cells": len(rows),
               "failed": sum(r["status"] == "failed" for r in rows),
               "cap_exceeded": sum(r["status"] == "cap-exceeded" for r in rows)}
    if args.format == "json":
        sys.stdout.write(dumps_json(summary))
    else:
        print(",".join(summary))
        print(",".join(str(v) for v in summary.values()))
    if summary["failed"]:
        return EXIT_NUMERIC
    return EXIT_CAP if summary["cap_exceeded"] else EXIT_OK


def cmd_certify(args) -> int:
    inst = load_instance(args.instance)
    result = {}
    if args.unique:
        if inst.x_true is None:
            raise UsageError("--unique needs an instance with x_true")
        cert = unique_solution_certificate(inst.operator, inst.x_true)
        result["uniqueness"] = {"unique": cert.unique, "margin": cert.margin,
                                "full_rank": cert.full_rank}
    if args.solution:
        if not args.theta:
            raise UsageError("--solution needs --theta")
        x, theta = read_vector(args.solution), read_vector(args.theta)
        if x.size != inst.n or theta.size != inst.m:
            raise UsageError("solution or theta length does not match the instance")
        result["duality_gap"] = duality_gap_certificate(x, theta, inst).to_dict()
    if not result:
        raise UsageError("nothing to certify; pass --solution/--theta or --unique")
    text = dumps_json(result)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_trace(args) -> int:
    inst = load_instance(args.instance)
    if inst.x_true is None:
        raise UsageError("trace needs an instance with x_true")
    rows, report = rate_trace(inst, FalConfig(gamma=args.gamma, stop_mode=args.stop))
    slope, r2 = log_linear_fit(rows)
    if args.format == "json":
        text = dumps_json({"rows": [list(r) for r in rows], "log_rate": slope, "r_squared": r2,
                           "n_fal": report.n_fal, "n_apg": report.n_apg, "n_mat": report.n_mat})
    else:
        lines = ["apg_iteration,rel_error,rel_feasibility,rel_optimality"]
        lines += [f"{r[0]},{sci(r[1])},{sci(r[2])},{sci(r[3])}" for r in rows]
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"N_FAL={report.n_fal} N_APG={report.n_apg} nMat={report.n_mat} "
          f"log_rate={slope:.6g} r_squared={r2:.6g}", file=sys.stderr)
    return EXIT_CAP if report.cap_exceeded else EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "bench": cmd_bench, "certify": cmd_certify,
            "trace": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FormatError, ZeroMeasurementError, ValueError) as exc:
        print(f"falbp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"falbp {args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
