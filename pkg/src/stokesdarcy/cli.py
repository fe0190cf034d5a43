"""Command line entry point: ``stokesdarcy <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, bench
from .krylov import SolverConfig
from .linalg import write_coordinate
from .precond import KINDS, MODES, make_preconditioner
from .system import PhysicalParams

NUMERICAL_ERRORS = (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _h(text: str) -> float:
    try:
        h = bench._parse_number(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid width {text!r}")
    if h <= 0 or abs(1 / h - round(1 / h)) > 1e-8 or round(1 / h) % 2:
        raise argparse.ArgumentTypeError("h must be 1/N with N even")
    return h


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _physics(p: argparse.ArgumentParser, precond=True):
    p.add_argument("--condition", type=str.upper, choices=("BJ", "BJS"), default="BJS")
    p.add_argument("--h", type=_h, default=1 / 80)
    p.add_argument("--mu", type=_positive, default=1e-3)
    p.add_argument("--k", type=_positive, default=1e-2)
    p.add_argument("--alpha", type=_positive, default=1.0)
    if precond:
        p.add_argument("--precond", type=str.lower, choices=KINDS + ("none",), default="con")
        p.add_argument("--mode", type=str.lower, choices=MODES, default="exact")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stokesdarcy", description="Coupled Stokes-Darcy solver and preconditioner study.")
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one benchmark system")
    _physics(s)
    s.add_argument("--tol", type=_positive, default=1e-8)
    s.add_argument("--restart", type=int, default=20)
    s.add_argument("--maxit", type=int, default=2000)
    s.add_argument("--export-matrix", metavar="PATH")
    s.add_argument("--report", metavar="PATH")
    s.add_argument("--force", action="store_true", help="allow exact variants below h = 1/320")

    sp_ = sub.add_parser("spectrum", help="eigenvalues of A P^{-1} as CSV")
    _physics(sp_)
    sp_.set_defaults(h=1 / 40, precond="tri")
    sp_.add_argument("--output", metavar="PATH")
    sp_.add_argument("--cap", type=int, default=4000)

    c = sub.add_parser("convergence", help="MMS error table and observed orders")
    _physics(c, precond=False)
    c.add_argument("--hs", type=lambda t: tuple(_h(x) for x in t.split(",")), default=(1 / 10, 1 / 20, 1 / 40))
    c.add_argument("--output", metavar="PATH")

    w = sub.add_parser("sweep", help="robustness sweep from a key = value config file")
    w.add_argument("config", metavar="CONFIG")
    w.add_argument("--output", metavar="PATH")
    w.add_argument("--no-timings", action="store_true", help="blank the timing columns")

    v = sub.add_parser("verify", help="run the analysis check battery")
    v.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    return ap


def _emit(text: str, path: str | None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_solve(a) -> int:
    if a.precond != "none" and a.mode == "exact" and a.h < 1 / 320 - 1e-12 and not a.force:
        print("exact preconditioners below h = 1/320 need --force", file=sys.stderr)
        return 2
    cfg = SolverConfig(restart=a.restart, tol=a.tol, maxit=a.maxit)
    params = PhysicalParams.isotropic(a.mu, a.k, a.alpha)
    sys_ = bench.benchmark_system(a.h, a.condition, params)
    if a.export_matrix:
        write_coordinate(a.export_matrix, sys_.matrix, f"{a.condition} h={a.h:g} mu={a.mu:g} k={a.k:g} alpha={a.alpha:g}")
    kind = None if a.precond == "none" else a.precond
    rec, rep = bench.run_case(sys_, kind, a.mode, cfg)
    true_res = float(np.linalg.norm(sys_.residual(rep.final_x)) / np.linalg.norm(sys_.rhs))
    record = dict(
        rec.__dict__,
        final_residual=rep.final_residual,
        true_residual=true_res,
        restarts=rep.restarts,
        size=sys_.size,
        errors=dict(zip(("u", "v", "p_ff", "p_pm"), bench.discrete_errors(sys_, rep.final_x).as_tuple())),
    )
    text = json.dumps(record, sort_keys=True) + "\n"
    _emit(text, a.report)
    if a.report:
        sys.stdout.write(bench.records_to_csv([rec]))
    return 0 if rep.converged else 1


def cmd_spectrum(a) -> int:
    params = PhysicalParams.isotropic(a.mu, a.k, a.alpha)
    sys_ = bench.benchmark_system(a.h, a.condition, params)
    if a.precond == "none":
        lam = analysis.dense_eigenvalues(sys_.matrix.toarray(), cap=a.cap).values
    else:
        P = make_preconditioner(sys_, a.precond, a.mode, **({} if a.precond == "con" else {"dense_schur": sys_.m <= 2500}))
        lam = analysis.spectrum_preconditioned(sys_, P, cap=a.cap).values
    lam = lam[np.lexsort((lam.imag, lam.real))]
    lines = ["re,im"] + [f"{z.real:.12e},{z.imag:.12e}" for z in lam]
    _emit("\n".join(lines) + "\n", a.output)
    return 0


def cmd_convergence(a) -> int:
    params = PhysicalParams.isotropic(a.mu, a.k, a.alpha)
    rows = bench.convergence_study(a.condition, params, a.hs)
    orders = bench.observed_orders(rows) if len(rows) > 1 else np.zeros((0, 4))
    out = ["h,err_u,err_v,err_p_ff,err_p_pm,order_u,order_v,order_p_ff,order_p_pm"]
    for i, r in enumerate(rows):
        o = orders[i - 1] if i else [np.nan] * 4
        out.append(",".join([f"{r.h:.10g}"] + [f"{e:.6e}" for e in r.as_tuple()] + [f"{x:.4f}" for x in o]))
    _emit("\n".join(out) + "\n", a.output)
    return 0


def cmd_sweep(a) -> int:
    try:
        spec = bench.SweepSpec.load(a.config)
    except ValueError as exc:
        print(f"error: bad sweep config: {exc}", file=sys.stderr)
        return 2
    recs = bench.robustness_sweep(spec if not spec.output else bench.SweepSpec(**{**spec.__dict__, "output": None}))
    text = bench.records_to_csv(recs, timings=not a.no_timings)
    _emit(text, a.output or spec.output)
    return 0


def cmd_verify(a) -> int:
    ok = True
    for rec in analysis.check_battery():
        ok &= rec.passed
        print(rec.to_text())
    return 1 if a.strict and not ok else 0


COMMANDS = dict(solve=cmd_solve, spectrum=cmd_spectrum, convergence=cmd_convergence, sweep=cmd_sweep, verify=cmd_verify)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not a.cmd:
        ap.print_usage(sys.stderr)
        return 2
    try:
        return COMMANDS[a.cmd](a)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
