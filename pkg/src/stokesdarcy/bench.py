"""Manufactured-solution benchmark: error study, iteration tables, sweeps."""
from __future__ import annotations

import csv
import io
import itertools
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import GridSpec, build_grid
from .krylov import SolverConfig, SolveReport, fgmres
from .mms import MmsSolution, mms_sources
from .precond import KINDS, MODES, make_preconditioner
from .system import BlockSystem, PhysicalParams, assemble_coupled, normalize_condition

__all__ = [
    "CSV_HEADER",
    "TableRecord",
    "SweepSpec",
    "ErrorRow",
    "benchmark_system",
    "run_case",
    "discrete_errors",
    "convergence_study",
    "observed_orders",
    "efficiency_table",
    "h_robustness_table",
    "robustness_sweep",
    "iteration_spread",
    "records_to_csv",
    "write_csv",
    "parse_config",
]

CSV_HEADER = (
    "condition", "precond", "mode", "h", "mu", "k", "alpha",
    "iterations", "converged", "wall_time_s", "setup_time_s",
)

BENCH_PARAMS = dict(mu=1e-3, k=1e-2, alpha=1.0)
H_TABLE = (1 / 10, 1 / 20, 1 / 40, 1 / 80, 1 / 160, 1 / 320, 1 / 640)


@dataclass(frozen=True)
class TableRecord:
    condition: str
    precond: str
    mode: str
    h: float
    mu: float
    k: float
    alpha: float
    iterations: int
    converged: bool
    wall_time_s: float
    setup_time_s: float

    def row(self) -> list[str]:
        return [
            self.condition, self.precond, self.mode, f"{self.h:.10g}", f"{self.mu:.10g}",
            f"{self.k:.10g}", f"{self.alpha:.10g}", str(self.iterations),
            "true" if self.converged else "false", f"{self.wall_time_s:.4f}", f"{self.setup_time_s:.4f}",
        ]


def records_to_csv(records: Iterable[TableRecord], timings: bool = True) -> str:
    """CSV text with the fixed header. ``timings=False`` blanks the time
    columns so repeated runs compare byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        row = r.row()
        if not timings:
            row[-2:] = ["", ""]
        w.writerow(row)
    return buf.getvalue()


def write_csv(path, records: Iterable[TableRecord], timings: bool = True) -> None:
    Path(path).write_text(records_to_csv(records, timings), encoding="utf-8")


def benchmark_system(h: float, condition: str, params: PhysicalParams) -> BlockSystem:
    grid = build_grid(GridSpec.uniform(h), uniform=True)
    return assemble_coupled(grid, params, mms_sources(params), condition)


def run_case(
    sys: BlockSystem,
    kind: str | None,
    mode: str = "exact",
    config: SolverConfig = SolverConfig(),
    **precond_kw,
) -> tuple[TableRecord, SolveReport]:
    """One FGMRES solve; ``kind=None`` runs without a preconditioner."""
    t0 = time.perf_counter()
    P = None if kind is None else make_preconditioner(sys, kind, mode, **precond_kw)
    setup = time.perf_counter() - t0
    rep = fgmres(lambda x: sys.matrix @ x, None if P is None else P.apply_inv, sys.rhs, config)
    p = sys.params
    rec = TableRecord(
        condition=sys.condition, precond=kind or "none", mode=mode if kind else "none",
        h=sys.grid.hx, mu=p.mu, k=p.kxx, alpha=p.alpha, iterations=rep.iterations,
        converged=rep.converged, wall_time_s=rep.wall_time, setup_time_s=setup,
    )
    return rec, rep


# ------------------------------------------------------------- errors


@dataclass(frozen=True)
class ErrorRow:
    h: float
    u: float
    v: float
    p_ff: float
    p_pm: float

    def as_tuple(self):
        return (self.u, self.v, self.p_ff, self.p_pm)


def discrete_errors(sys: BlockSystem, x: np.ndarray) -> ErrorRow:
    """Discrete L2 errors sqrt(hx hy sum (x_h - x_exact)^2) per field.

    Interface pressure nodes are excluded from the p_pm error (they carry a
    half-cell volume and are reported through the normal-force balance).
    """
    g = sys.grid
    sol = MmsSolution()
    coords = g.unknown_coords()
    d = g.dofs
    w = g.hx * g.hy
    x1, x2, x3 = sys.split(x)

    def err(vals, exact):
        return float(np.sqrt(w * np.sum((vals - exact) ** 2)))

    ux, uy = coords["u"]
    vx, vy = coords["v"]
    px, py = coords["pff"]
    qx, qy = coords["ppm"]
    nu = d.n_u
    return ErrorRow(
        h=g.hx,
        u=err(x1[:nu], sol.u(ux, uy)),
        v=err(x1[nu:], sol.v(vx, vy)),
        p_ff=err(x2, sol.p_ff(px, py)),
        p_pm=err(x3[: g.nx * g.ny_pm], sol.p_pm(qx, qy)),
    )


def convergence_study(
    condition: str,
    params: PhysicalParams | None = None,
    hs: Sequence[float] = (1 / 10, 1 / 20, 1 / 40),
    tol: float = 1e-12,
) -> list[ErrorRow]:
    """MMS errors per grid, solved by FGMRES with the exact constraint
    preconditioner. A non-convergent solve stops the study; rows computed so
    far are returned together with a RuntimeError chained in ``partial``."""
    params = params or PhysicalParams.isotropic(**BENCH_PARAMS)
    rows: list[ErrorRow] = []
    for h in hs:
        sys = benchmark_system(h, condition, params)
        _, rep = run_case(sys, "con", "exact", SolverConfig(tol=tol, maxit=2000))
        if not rep.converged:
            err = RuntimeError(f"solve did not converge at h={h:g}")
            err.partial = rows
            raise err
        rows.append(discrete_errors(sys, rep.final_x))
    return rows


def observed_orders(rows: Sequence[ErrorRow]) -> np.ndarray:
    """log(e_h / e_h') / log(h / h') between consecutive rows, per field."""
    e = np.array([r.as_tuple() for r in rows])
    h = np.array([r.h for r in rows])
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])[:, None]


# ------------------------------------------------------------ tables


def efficiency_table(
    h: float = 1 / 80,
    params: PhysicalParams | None = None,
    conditions: Sequence[str] = ("BJ", "BJS"),
    modes: Sequence[str] = MODES,
    kinds: Sequence[str] = KINDS,
    config: SolverConfig = SolverConfig(),
) -> list[TableRecord]:
    params = params or PhysicalParams.isotropic(**BENCH_PARAMS)
    out = []
    for cond in conditions:
        sys = benchmark_system(h, cond, params)
        for kind in kinds:
            for mode in modes:
                out.append(run_case(sys, kind, mode, config)[0])
    return out


def h_robustness_table(
    hs: Sequence[float] = H_TABLE[:5],
    params: PhysicalParams | None = None,
    conditions: Sequence[str] = ("BJ", "BJS"),
    kinds: Sequence[str] = KINDS,
    modes: Sequence[str] = ("inexact",),
    config: SolverConfig = SolverConfig(),
    force: bool = False,
) -> list[TableRecord]:
    """Inexact variants per grid. Exact variants at h < 1/320 need ``force``."""
    params = params or PhysicalParams.isotropic(**BENCH_PARAMS)
    out = []
    for h in hs:
        use_modes = [m for m in modes if force or m == "inexact" or h > 1 / 320 + 1e-12]
        for cond in conditions:
            sys = benchmark_system(h, cond, params)
            for kind in kinds:
                for mode in use_modes:
                    out.append(run_case(sys, kind, mode, config)[0])
    return out


# ------------------------------------------------------------ sweeps


def _floats(v) -> tuple[float, ...]:
    if isinstance(v, str):
        v = [t for t in v.split(",") if t.strip()]
    if isinstance(v, (int, float)):
        v = [v]
    return tuple(_parse_number(t) for t in v)


def _parse_number(t) -> float:
    if isinstance(t, (int, float)):
        return float(t)
    t = t.strip()
    if "/" in t:
        a, b = t.split("/")
        return float(a) / float(b)
    return float(t)


def _strs(v) -> tuple[str, ...]:
    if isinstance(v, str):
        v = v.split(",")
    return tuple(t.strip() for t in v if t.strip())


@dataclass(frozen=True)
class SweepSpec:
    mu: tuple = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    k: tuple = (1e-3, 1e-2, 1e-1)
    alpha: tuple = (0.1, 1.0, 10.0)
    h: tuple = (1 / 80,)
    conditions: tuple = ("BJ", "BJS")
    kinds: tuple = KINDS
    modes: tuple = ("inexact",)
    output: str | None = None
    budget: int = 2000
    restart: int = 20
    tol: float = 1e-8
    maxit: int = 2000

    def __post_init__(self):
        for name in ("mu", "k", "alpha", "h"):
            vals = getattr(self, name)
            if not vals:
                raise ValueError(f"{name} list is empty")
            if any(not np.isfinite(v) or v <= 0 for v in vals):
                raise ValueError(f"{name} values must be positive")
        for c in self.conditions:
            normalize_condition(c)
        for kd in self.kinds:
            if kd not in KINDS:
                raise ValueError(f"unknown preconditioner {kd!r}")
        for md in self.modes:
            if md not in MODES:
                raise ValueError(f"unknown mode {md!r}")
        if self.n_cells() > self.budget:
            raise ValueError(f"sweep has {self.n_cells()} cells, budget is {self.budget}")

    def n_cells(self) -> int:
        return (len(self.mu) * len(self.k) * len(self.alpha) * len(self.h)
                * len(self.conditions) * len(self.kinds) * len(self.modes))

    @property
    def config(self) -> SolverConfig:
        return SolverConfig(restart=self.restart, tol=self.tol, maxit=self.maxit)

    @classmethod
    def from_mapping(cls, m: dict) -> "SweepSpec":
        kw = {}
        known = {f.name for f in fields(cls)}
        for key, val in m.items():
            key = {"condition": "conditions", "precond": "kinds", "mode": "modes"}.get(key, key)
            if key not in known:
                raise ValueError(f"unknown sweep key {key!r}")
            if key in ("mu", "k", "alpha", "h"):
                kw[key] = _floats(val)
            elif key in ("conditions", "modes"):
                kw[key] = tuple(s.upper() if key == "conditions" else s.lower() for s in _strs(val))
            elif key == "kinds":
                kw[key] = tuple(s.lower() for s in _strs(val))
            elif key == "output":
                kw[key] = str(val).strip()
            elif key in ("budget", "restart", "maxit"):
                kw[key] = int(val)
            else:
                kw[key] = float(val)
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str) -> "SweepSpec":
        return cls.from_mapping(parse_config(text))

    @classmethod
    def load(cls, path) -> "SweepSpec":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma
    separated. Duplicate keys are an error."""
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {no}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {no}: empty key")
        if key in out:
            raise ValueError(f"line {no}: duplicate key {key!r}")
        out[key] = val
    return out


def robustness_sweep(spec: SweepSpec, on_record=None) -> list[TableRecord]:
    """Cartesian sweep; a failing cell is recorded as not converged and the
    sweep moves on. Ordering is fixed: condition, k, mu, alpha, h, kind, mode."""
    out = []
    for cond, k, mu, alpha, h in itertools.product(spec.conditions, spec.k, spec.mu, spec.alpha, spec.h):
        params = PhysicalParams.isotropic(mu, k, alpha)
        sys = benchmark_system(h, cond, params)
        for kind in spec.kinds:
            for mode in spec.modes:
                try:
                    rec = run_case(sys, kind, mode, spec.config)[0]
                except (ArithmeticError, RuntimeError, np.linalg.LinAlgError):
                    rec = TableRecord(normalize_condition(cond), kind, mode, sys.grid.hx, mu, k, alpha,
                                      spec.maxit, False, float("nan"), float("nan"))
                out.append(rec)
                if on_record is not None:
                    on_record(rec)
    if spec.output:
        write_csv(spec.output, out)
    return out


def iteration_spread(records: Sequence[TableRecord]) -> dict:
    """(max - min) / median of the iteration counts per (condition, precond,
    mode, k), taken over the mu x alpha grid. Non-converged cells count as
    their iteration cap."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.condition, r.precond, r.mode, r.k), []).append(r.iterations)
    return {key: (max(v) - min(v)) / float(np.median(v)) for key, v in groups.items()}
