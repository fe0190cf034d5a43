"""Assembly of the coupled Stokes-Darcy block system.

The monolithic matrix is laid out as::

    | A    B^T  C2^T |   | v_ff |   | b1 |
    | B    0    0    | . | p_ff | = | b2 |
    | C1   0    -D   |   | p_pm |   | b3 |

with C1 = C2 = C for the Beavers-Joseph-Saffman condition. Momentum rows are
integrated over their control volumes (flux form, right-hand side scaled by
the cell area); Dirichlet data is eliminated into the right-hand side.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .grid import StaggeredGrid, interface_columns
from .linalg import finalize

__all__ = [
    "PhysicalParams",
    "SourceFields",
    "BlockSystem",
    "AssemblyError",
    "Contribution",
    "assemble_stokes",
    "assemble_darcy",
    "assemble_interface_mass",
    "assemble_interface_normal_force",
    "assemble_interface_tangential",
    "assemble_coupled",
    "postprocess_darcy_velocity",
    "zero_sources",
    "normalize_condition",
]


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    mu: float = 1e-3
    kxx: float = 1e-2
    kyy: float = 1e-2
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("mu", "kxx", "kyy", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")

    @classmethod
    def isotropic(cls, mu: float = 1e-3, k: float = 1e-2, alpha: float = 1.0) -> "PhysicalParams":
        return cls(mu=mu, kxx=k, kyy=k, alpha=alpha)

    @property
    def sqrtK(self) -> float:
        # tau . K . tau on the flat interface, tau = (1, 0)
        return float(np.sqrt(self.kxx))


@dataclass(frozen=True)
class SourceFields:
    """Volume sources, Dirichlet data and optional interface data.

    ``f_ff(x, y) -> (fu, fv)``, ``f_pm(x, y)``, ``vbar(x, y) -> (u, v)``,
    ``pbar(x, y)``. The interface terms are residuals of the coupling
    conditions, zero for a physical problem:

    * ``mass_jump(x)``: (v_ff - v_pm) . n
    * ``normal_jump(x)``: -n.T.n - p_pm
    * ``tangential_jump(x)``: left-hand side of the BJ / BJS condition
    """

    f_ff: Callable
    f_pm: Callable
    vbar: Callable
    pbar: Callable
    mass_jump: Optional[Callable] = None
    normal_jump: Optional[Callable] = None
    tangential_jump: Optional[Callable] = None


def zero_sources() -> SourceFields:
    return SourceFields(
        f_ff=lambda x, y: (0.0 * x, 0.0 * x),
        f_pm=lambda x, y: 0.0 * x,
        vbar=lambda x, y: (0.0 * x, 0.0 * x),
        pbar=lambda x, y: 0.0 * x,
    )


def normalize_condition(condition: str) -> str:
    c = str(condition).upper()
    if c not in ("BJ", "BJS"):
        raise ValueError(f"condition must be BJ or BJS, got {condition!r}")
    return c


class Contribution:
    """Triplet accumulator for rows of the monolithic system.

    ``add(row, col, coeff, bval)`` with ``col < 0`` moves ``coeff * bval`` to
    the right-hand side.
    """

    def __init__(self, size: int):
        self.size = size
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs = np.zeros(size)

    def add(self, row: int, col: int, coeff: float, bval: float | None = None) -> None:
        if col >= 0:
            self.rows.append(row)
            self.cols.append(col)
            self.vals.append(coeff)
        else:
            if bval is None:
                raise AssemblyError(f"row {row}: eliminated neighbour without boundary value")
            self.rhs[row] -= coeff * bval

    def extend(self, other: "Contribution") -> None:
        self.rows += other.rows
        self.cols += other.cols
        self.vals += other.vals
        self.rhs += other.rhs

    def matrix(self) -> sp.csr_matrix:
        return finalize(
            sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.size, self.size))
        )


def _u_at(grid, j, i):
    u = grid.dofs.u
    if 0 <= j < u.shape[0] and 0 <= i < u.shape[1]:
        return int(u[j, i])
    return -1


def _v_at(grid, j, i):
    v = grid.dofs.v
    if 0 <= j < v.shape[0] and 0 <= i < v.shape[1]:
        return int(v[j, i])
    return -1


def assemble_stokes(grid: StaggeredGrid, params: PhysicalParams, sources: SourceFields) -> Contribution:
    """Interior MAC rows: u-momentum (j >= 1), v-momentum (j >= 1), continuity."""
    d = grid.dofs
    nx, ny = grid.nx, grid.ny_ff
    hx, hy, mu = grid.hx, grid.hy, params.mu
    out = Contribution(d.size)
    ub = lambda x, y: float(sources.vbar(x, y)[0])
    vb = lambda x, y: float(sources.vbar(x, y)[1])

    # u-momentum
    for j in range(1, ny + 1):
        y = (j - 0.5) * hy
        for i in range(1, nx):
            x = i * hx
            row = int(d.u[j, i])
            diag = 0.0
            # normal stress on the east/west faces (cell centres)
            for s in (-1, 1):
                c = 2 * mu * hy / hx
                diag += c
                out.add(row, _u_at(grid, j, i + s), -c, ub(x + s * hx, y))
            out.add(row, int(d.pff[j - 1, i]), hy)
            out.add(row, int(d.pff[j - 1, i - 1]), -hy)
            # shear on the north face y = j*hy
            if j < ny:
                c = mu * hx / hy
                out.add(row, int(d.u[j + 1, i]), -c)
            else:
                c = 2 * mu * hx / hy
                out.add(row, -1, -c, ub(x, j * hy))
            diag += c
            out.add(row, _v_at(grid, j, i), -mu, vb(x + 0.5 * hx, j * hy))
            out.add(row, _v_at(grid, j, i - 1), mu, vb(x - 0.5 * hx, j * hy))
            # shear on the south face y = (j-1)*hy
            c = mu * hx / hy if j >= 2 else 2 * mu * hx / hy
            diag += c
            out.add(row, int(d.u[j - 1, i]), -c)
            out.add(row, _v_at(grid, j - 1, i), mu, vb(x + 0.5 * hx, (j - 1) * hy))
            out.add(row, _v_at(grid, j - 1, i - 1), -mu, vb(x - 0.5 * hx, (j - 1) * hy))
            out.add(row, row, diag)
            out.rhs[row] += float(sources.f_ff(x, y)[0]) * hx * hy

    # v-momentum away from the interface
    for j in range(1, ny):
        y = j * hy
        for i in range(nx):
            x = (i + 0.5) * hx
            row = int(d.v[j, i])
            diag = 0.0
            for s in (-1, 1):
                c = 2 * mu * hx / hy
                diag += c
                out.add(row, _v_at(grid, j + s, i), -c, vb(x, y + s * hy))
            out.add(row, int(d.pff[j, i]), hx)
            out.add(row, int(d.pff[j - 1, i]), -hx)
            # east face x = (i+1)*hx
            if i + 1 < nx:
                c = mu * hy / hx
                out.add(row, int(d.v[j, i + 1]), -c)
            else:
                c = 2 * mu * hy / hx
                out.add(row, -1, -c, vb((i + 1) * hx, y))
            diag += c
            out.add(row, _u_at(grid, j + 1, i + 1), -mu, ub((i + 1) * hx, y + 0.5 * hy))
            out.add(row, _u_at(grid, j, i + 1), mu, ub((i + 1) * hx, y - 0.5 * hy))
            # west face x = i*hx
            if i > 0:
                c = mu * hy / hx
                out.add(row, int(d.v[j, i - 1]), -c)
            else:
                c = 2 * mu * hy / hx
                out.add(row, -1, -c, vb(0.0, y))
            diag += c
            out.add(row, _u_at(grid, j + 1, i), mu, ub(i * hx, y + 0.5 * hy))
            out.add(row, _u_at(grid, j, i), -mu, ub(i * hx, y - 0.5 * hy))
            out.add(row, row, diag)
            out.rhs[row] += float(sources.f_ff(x, y)[1]) * hx * hy

    # continuity: B = -(outward face flux)
    for j in range(ny):
        yc = (j + 0.5) * hy
        for i in range(nx):
            xc = (i + 0.5) * hx
            row = int(d.pff[j, i])
            out.add(row, _u_at(grid, j + 1, i), hy, ub(i * hx, yc))
            out.add(row, _u_at(grid, j + 1, i + 1), -hy, ub((i + 1) * hx, yc))
            out.add(row, int(d.v[j, i]), hx)
            out.add(row, _v_at(grid, j + 1, i), -hx, vb(xc, (j + 1) * hy))
    return out


def assemble_darcy(grid: StaggeredGrid, params: PhysicalParams, sources: SourceFields) -> Contribution:
    """Two-point flux rows for the porous cells, stored with the -D sign."""
    d = grid.dofs
    nx, nyp = grid.nx, grid.ny_pm
    hx, hy, mu = grid.hx, grid.hy, params.mu
    tx = params.kxx / mu * hy / hx
    ty = params.kyy / mu * hx / hy
    out = Contribution(d.size)
    for r in range(nyp):
        y = -0.5 + (r + 0.5) * hy
        for i in range(nx):
            x = (i + 0.5) * hx
            row = int(d.ppm[r, i])
            diag = 0.0
            for s in (-1, 1):
                if 0 <= i + s < nx:
                    diag += tx
                    out.add(row, int(d.ppm[r, i + s]), tx)
                else:
                    diag += 2 * tx
                    out.add(row, -1, 2 * tx, float(sources.pbar(x + s * 0.5 * hx, y)))
            if r > 0:
                diag += ty
                out.add(row, int(d.ppm[r - 1, i]), ty)
            else:
                diag += 2 * ty
                out.add(row, -1, 2 * ty, float(sources.pbar(x, -0.5)))
            if r + 1 < nyp:
                diag += ty
                out.add(row, int(d.ppm[r + 1, i]), ty)
            else:
                diag += 2 * ty
                out.add(row, int(d.ppm_if[i]), 2 * ty)
            out.add(row, row, -diag)
            out.rhs[row] -= float(sources.f_pm(x, y)) * hx * hy
    return out


def assemble_interface_mass(
    grid: StaggeredGrid, params: PhysicalParams, sources: SourceFields | None = None
) -> Contribution:
    """Mass conservation across each segment: -hx v_P enters C (C1) and
    +-2 kyy hx / (mu hy) on (p_s, p_P) enter D."""
    d = grid.dofs
    hx, hy = grid.hx, grid.hy
    c = 2 * params.kyy * hx / (params.mu * hy)
    out = Contribution(d.size)
    for col in interface_columns(grid):
        row = col.ppm_P
        out.add(row, col.v_P, -hx)
        # row reads C v - D p with D[P, s] = -c, D[P, P] = +c
        out.add(row, col.ppm_s, c)
        out.add(row, col.ppm_P, -c)
        if sources is not None and sources.mass_jump is not None:
            x = (col.segment + 0.5) * hx
            out.rhs[row] += -hx * float(sources.mass_jump(x))
    return out


def assemble_interface_normal_force(
    grid: StaggeredGrid, params: PhysicalParams, sources: SourceFields
) -> Contribution:
    """Half-cell v-momentum rows on the interface (control volume hx*hy/2)."""
    d = grid.dofs
    nx = grid.nx
    hx, hy, mu = grid.hx, grid.hy, params.mu
    out = Contribution(d.size)
    ub = lambda x, y: float(sources.vbar(x, y)[0])
    vb = lambda x, y: float(sources.vbar(x, y)[1])
    for col in interface_columns(grid):
        i = col.segment
        x = (i + 0.5) * hx
        row = col.v_P
        diag = 2 * mu * hx / hy
        out.add(row, col.v_N, -2 * mu * hx / hy, vb(x, hy))
        # east/west half faces; a missing v neighbour is a wall at hx/2
        for s, nb, u_lo, u_hi in ((1, col.v_E, col.u_e, col.u_ne), (-1, col.v_W, col.u_w, col.u_nw)):
            xf = (i + (1 if s > 0 else 0)) * hx
            if nb >= 0:
                c = 0.5 * mu * hy / hx
                out.add(row, nb, -c)
            else:
                c = mu * hy / hx
                out.add(row, -1, -c, vb(xf, 0.0))
            diag += c
            out.add(row, u_hi, -s * mu, ub(xf, 0.5 * hy))
            out.add(row, u_lo, s * mu, ub(xf, 0.0))
        out.add(row, row, diag)
        out.add(row, col.pff_n, hx)
        out.add(row, col.ppm_P, -hx)
        out.rhs[row] += float(sources.f_ff(x, 0.0)[1]) * hx * hy / 2
        if sources.normal_jump is not None:
            out.rhs[row] += hx * float(sources.normal_jump(x))
    return out


def assemble_interface_tangential(
    grid: StaggeredGrid, params: PhysicalParams, condition: str, sources: SourceFields | None = None
) -> Contribution:
    """BJ / BJS rows for the interface u unknowns (interior vertices)."""
    condition = normalize_condition(condition)
    d = grid.dofs
    hx, hy, mu = grid.hx, grid.hy, params.mu
    slip = params.alpha / params.sqrtK
    bj = params.alpha * params.kyy / params.sqrtK
    out = Contribution(d.size)
    for i in range(1, grid.nx):
        row = int(d.u[0, i])
        out.add(row, row, mu * slip * hx + 2 * mu * hx / hy)
        out.add(row, int(d.u[1, i]), -2 * mu * hx / hy)
        out.add(row, int(d.v[0, i - 1]), mu)
        out.add(row, int(d.v[0, i]), -mu)
        if condition == "BJ":
            out.add(row, int(d.ppm_if[i - 1]), -bj)
            out.add(row, int(d.ppm_if[i]), bj)
        if sources is not None and sources.tangential_jump is not None:
            out.rhs[row] += mu * slip * hx * float(sources.tangential_jump(i * hx))
    return out


@dataclass(frozen=True)
class BlockSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    C1: sp.csr_matrix
    C2: sp.csr_matrix
    D: sp.csr_matrix
    condition: str
    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: StaggeredGrid
    params: PhysicalParams

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def l(self) -> int:
        return self.D.shape[0]

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def C(self) -> sp.csr_matrix:
        if self.condition != "BJS":
            raise AttributeError("C is only defined for the BJS system; use C1/C2")
        return self.C1

    def split(self, x: np.ndarray):
        n, m = self.n, self.m
        return x[:n], x[n : n + m], x[n + m :]

    def velocity_split(self) -> tuple[slice, slice]:
        n_u = self.grid.dofs.n_u
        return slice(0, n_u), slice(n_u, self.n)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.rhs - self.matrix @ x

    def with_matrix(self, matrix, rhs=None) -> "BlockSystem":
        """Re-split a modified monolithic matrix into blocks."""
        return _from_monolithic(matrix, self.rhs if rhs is None else rhs, self.grid, self.params, self.condition)


def _from_monolithic(M, rhs, grid, params, condition) -> BlockSystem:
    M = finalize(M)
    s1, s2, s3 = grid.dofs.blocks()
    A = finalize(M[s1, s1])
    B = finalize(M[s2, s1])
    Bt = finalize(M[s1, s2])
    C1 = finalize(M[s3, s1])
    C2 = finalize(M[s1, s3].T)
    D = finalize(-M[s3, s3])
    if (Bt - B.T).count_nonzero() and abs(Bt - B.T).max() > 0:
        raise AssemblyError("momentum pressure block is not B^T")
    for blk, name in ((M[s2, s2], "(2,2)"), (M[s2, s3], "(2,3)"), (M[s3, s2], "(3,2)")):
        if blk.count_nonzero():
            raise AssemblyError(f"block {name} must be zero")
    return BlockSystem(A=A, B=B, C1=C1, C2=C2, D=D, condition=condition, matrix=M,
                       rhs=np.asarray(rhs, dtype=float), grid=grid, params=params)


def _verify_blocks(sys: BlockSystem) -> None:
    A = sys.A.toarray()
    D = sys.D.toarray()
    if abs(A - A.T).max() > 0 or np.linalg.eigvalsh(A).min() <= 0:
        raise AssemblyError("A is not symmetric positive definite")
    if abs(D - D.T).max() > 0 or np.linalg.eigvalsh(D).min() <= 0:
        raise AssemblyError("D is not symmetric positive definite")
    if np.linalg.matrix_rank(sys.B.toarray()) < sys.m:
        raise AssemblyError("B is rank deficient")


def assemble_coupled(
    grid: StaggeredGrid,
    params: PhysicalParams,
    sources: SourceFields | None = None,
    condition: str = "BJS",
    verify: bool = False,
) -> BlockSystem:
    condition = normalize_condition(condition)
    sources = zero_sources() if sources is None else sources
    total = Contribution(grid.dofs.size)
    for part in (
        assemble_stokes(grid, params, sources),
        assemble_darcy(grid, params, sources),
        assemble_interface_mass(grid, params, sources),
        assemble_interface_normal_force(grid, params, sources),
        assemble_interface_tangential(grid, params, condition, sources),
    ):
        total.extend(part)
    sys = _from_monolithic(total.matrix(), total.rhs, grid, params, condition)
    if condition == "BJS" and (sys.C1 != sys.C2).nnz:
        raise AssemblyError("BJS system must have C1 == C2")
    if verify:
        _verify_blocks(sys)
    return sys


def postprocess_darcy_velocity(grid: StaggeredGrid, params: PhysicalParams, p_pm: np.ndarray, pbar=None):
    """Darcy face velocities from a porous pressure vector (length l).

    Returns ``{"u": (x, y, val), "v": (x, y, val)}`` over vertical and
    horizontal faces. Faces on the external boundary need ``pbar``; without
    it they are skipped. Horizontal faces on the interface use the interface
    pressure nodes.
    """
    nx, nyp = grid.nx, grid.ny_pm
    hx, hy, mu = grid.hx, grid.hy, params.mu
    p_pm = np.asarray(p_pm)
    cells = p_pm[: nx * nyp].reshape(nyp, nx)
    top = p_pm[nx * nyp :]
    yc = -0.5 + (np.arange(nyp) + 0.5) * hy
    xc = (np.arange(nx) + 0.5) * hx

    xs, ys, us = [], [], []
    for r in range(nyp):
        for i in range(nx + 1):
            x = i * hx
            if 0 < i < nx:
                g = (cells[r, i] - cells[r, i - 1]) / hx
            elif pbar is None:
                continue
            elif i == 0:
                g = (cells[r, 0] - float(pbar(0.0, yc[r]))) / (hx / 2)
            else:
                g = (float(pbar(1.0, yc[r])) - cells[r, -1]) / (hx / 2)
            xs.append(x)
            ys.append(yc[r])
            us.append(-params.kxx / mu * g)

    xv, yv, vs = [], [], []
    for r in range(nyp + 1):
        y = -0.5 + r * hy
        for i in range(nx):
            if r == nyp:
                g = (top[i] - cells[r - 1, i]) / (hy / 2)
            elif r > 0:
                g = (cells[r, i] - cells[r - 1, i]) / hy
            elif pbar is None:
                continue
            else:
                g = (cells[0, i] - float(pbar(xc[i], -0.5))) / (hy / 2)
            xv.append(xc[i])
            yv.append(y)
            vs.append(-params.kyy / mu * g)
    return {
        "u": (np.array(xs), np.array(ys), np.array(us)),
        "v": (np.array(xv), np.array(yv), np.array(vs)),
    }
