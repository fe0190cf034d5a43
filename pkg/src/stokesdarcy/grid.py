"""Staggered (MAC) grid over the coupled free-flow / porous-medium domain.

Layout, with ``h = hx = hy`` in the benchmark::

    free flow   [0,1] x [0, 0.5]   u on vertical faces, v on horizontal faces,
                                   p_ff at cell centres
    interface   y = 0              u at interior vertices, v and p_pm at the
                                   midpoint of every segment
    porous      [0,1] x [-0.5, 0]  p_pm at cell centres

Row index conventions (``j`` counts upward, ``i`` to the right):

* ``u[j, i]``: x = i*hx; j = 0 is the interface row (y = 0), j >= 1 sits at
  y = (j - 1/2)*hy.  Columns i = 0 and i = nx are Dirichlet.
* ``v[j, i]``: x = (i + 1/2)*hx, y = j*hy; j = ny_ff is Dirichlet.
* ``pff[j, i]``: cell centre ((i + 1/2)*hx, (j + 1/2)*hy).
* ``ppm[r, i]``: porous cell centre ((i + 1/2)*hx, -0.5 + (r + 1/2)*hy),
  then one interface node per segment at ((i + 1/2)*hx, 0).

Eliminated (Dirichlet) positions carry index -1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "DofMap",
    "StaggeredGrid",
    "InterfaceColumn",
    "build_grid",
    "dof_counts",
    "interface_columns",
]

LX = 1.0
LY_FF = 0.5
LY_PM = 0.5


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny_ff: int
    ny_pm: int

    @classmethod
    def uniform(cls, h: float) -> "GridSpec":
        """Square cells of width ``h`` on the benchmark domain."""
        nx = int(round(LX / h))
        ny = int(round(LY_FF / h))
        if nx <= 0 or abs(nx * h - LX) > 1e-9 or abs(ny * h - LY_FF) > 1e-9:
            raise ValueError(f"h={h} does not divide the benchmark domain")
        return cls(nx, ny, ny)

    @property
    def hx(self) -> float:
        return LX / self.nx

    @property
    def hy(self) -> float:
        return LY_FF / self.ny_ff

    def validate(self, uniform: bool = False) -> None:
        for name in ("nx", "ny_ff", "ny_pm"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or val <= 0:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
        if self.nx < 2:
            raise ValueError("nx must be at least 2 for the interface stencils")
        if abs(LY_PM / self.ny_pm - self.hy) > 1e-12:
            raise ValueError("ny_ff and ny_pm must give the same vertical spacing")
        if uniform and abs(self.hx - self.hy) > 1e-12:
            raise ValueError(f"uniform mode needs hx == hy, got {self.hx} != {self.hy}")


@dataclass(frozen=True)
class DofMap:
    """Global numbering: u, v, p_ff, p_pm, each lexicographic with x fastest."""

    u: np.ndarray  # (ny_ff + 1, nx + 1)
    v: np.ndarray  # (ny_ff + 1, nx)
    pff: np.ndarray  # (ny_ff, nx)
    ppm: np.ndarray  # (ny_pm, nx) porous cells
    ppm_if: np.ndarray  # (nx,) interface nodes
    n_u: int
    n: int
    m: int
    l: int

    @property
    def size(self) -> int:
        return self.n + self.m + self.l

    def blocks(self) -> tuple[slice, slice, slice]:
        n, m, l = self.n, self.m, self.l
        return slice(0, n), slice(n, n + m), slice(n + m, n + m + l)

    def inverse(self, g: int) -> tuple[str, int, int]:
        """Map a global index back to ``(kind, j, i)``.

        Interface p_pm nodes are reported as kind ``"ppm_if"`` with j = 0.
        """
        g = int(g)
        if not 0 <= g < self.size:
            raise IndexError(g)
        return self._inverse_table[g]

    def index(self, kind: str, j: int, i: int) -> int:
        if kind == "ppm_if":
            return int(self.ppm_if[i])
        return int(getattr(self, kind)[j, i])

    @property
    def _inverse_table(self) -> list[tuple[str, int, int]]:
        table = self.__dict__.get("_inv")
        if table is None:
            table = [None] * self.size
            for kind in ("u", "v", "pff", "ppm"):
                arr = getattr(self, kind)
                for (j, i), g in np.ndenumerate(arr):
                    if g >= 0:
                        table[g] = (kind, j, i)
            for i, g in enumerate(self.ppm_if):
                table[g] = ("ppm_if", 0, i)
            object.__setattr__(self, "_inv", table)
        return table


@dataclass(frozen=True)
class InterfaceColumn:
    """Indices around one interface segment ``[i*hx, (i+1)*hx] x {0}``.

    ``u_P``/``u_N`` belong to the segment's west vertex, which carries the
    tangential (BJ/BJS) row. Missing neighbours (Dirichlet or absent) are -1
    and listed in ``missing``.
    """

    segment: int
    u_P: int
    u_N: int
    v_P: int
    v_N: int
    v_W: int
    v_E: int
    u_w: int
    u_e: int
    u_nw: int
    u_ne: int
    pff_n: int
    ppm_P: int
    ppm_s: int
    ppm_w: int
    ppm_e: int
    missing: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class StaggeredGrid:
    spec: GridSpec
    dofs: DofMap

    @property
    def nx(self) -> int:
        return self.spec.nx

    @property
    def ny_ff(self) -> int:
        return self.spec.ny_ff

    @property
    def ny_pm(self) -> int:
        return self.spec.ny_pm

    @property
    def hx(self) -> float:
        return self.spec.hx

    @property
    def hy(self) -> float:
        return self.spec.hy

    # physical coordinates of grid positions -------------------------------
    def u_xy(self, j, i):
        j = np.asarray(j)
        y = np.where(j == 0, 0.0, (j - 0.5) * self.hy)
        return np.asarray(i) * self.hx, y

    def v_xy(self, j, i):
        return (np.asarray(i) + 0.5) * self.hx, np.asarray(j) * self.hy

    def pff_xy(self, j, i):
        return (np.asarray(i) + 0.5) * self.hx, (np.asarray(j) + 0.5) * self.hy

    def ppm_xy(self, r, i):
        return (np.asarray(i) + 0.5) * self.hx, -LY_PM + (np.asarray(r) + 0.5) * self.hy

    def unknown_coords(self):
        """Coordinates of every unknown, grouped by kind, in global order."""
        d = self.dofs
        out = {}
        for kind, fn in (("u", self.u_xy), ("v", self.v_xy), ("pff", self.pff_xy), ("ppm", self.ppm_xy)):
            arr = getattr(d, kind)
            jj, ii = np.nonzero(arr >= 0)
            order = np.argsort(arr[jj, ii])
            out[kind] = fn(jj[order], ii[order])
        i = np.arange(self.nx)
        out["ppm_if"] = ((i + 0.5) * self.hx, np.zeros(self.nx))
        return out


def build_grid(spec: GridSpec, uniform: bool = False) -> StaggeredGrid:
    spec.validate(uniform=uniform)
    nx, ny, nyp = spec.nx, spec.ny_ff, spec.ny_pm

    u = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    count = (ny + 1) * (nx - 1)
    u[:, 1:nx] = np.arange(count).reshape(ny + 1, nx - 1)
    n_u = count

    v = -np.ones((ny + 1, nx), dtype=np.int64)
    v[:ny, :] = n_u + np.arange(ny * nx).reshape(ny, nx)
    n = n_u + ny * nx

    pff = n + np.arange(ny * nx, dtype=np.int64).reshape(ny, nx)
    m = ny * nx

    ppm = n + m + np.arange(nyp * nx, dtype=np.int64).reshape(nyp, nx)
    ppm_if = n + m + nyp * nx + np.arange(nx, dtype=np.int64)
    l = nyp * nx + nx

    for arr in (u, v, pff, ppm, ppm_if):
        arr.setflags(write=False)
    dofs = DofMap(u=u, v=v, pff=pff, ppm=ppm, ppm_if=ppm_if, n_u=n_u, n=n, m=m, l=l)
    return StaggeredGrid(spec, dofs)


def dof_counts(grid: StaggeredGrid) -> tuple[int, int, int]:
    d = grid.dofs
    return d.n, d.m, d.l


def interface_columns(grid: StaggeredGrid) -> list[InterfaceColumn]:
    d = grid.dofs
    nx = grid.nx

    def at(arr, j, i):
        if 0 <= j < arr.shape[0] and 0 <= i < arr.shape[1]:
            return int(arr[j, i])
        return -1

    cols = []
    for i in range(nx):
        entries = dict(
            segment=i,
            u_P=at(d.u, 0, i),
            u_N=at(d.u, 1, i),
            v_P=at(d.v, 0, i),
            v_N=at(d.v, 1, i),
            v_W=at(d.v, 0, i - 1),
            v_E=at(d.v, 0, i + 1),
            u_w=at(d.u, 0, i),
            u_e=at(d.u, 0, i + 1),
            u_nw=at(d.u, 1, i),
            u_ne=at(d.u, 1, i + 1),
            pff_n=at(d.pff, 0, i),
            ppm_P=int(d.ppm_if[i]),
            ppm_s=at(d.ppm, grid.ny_pm - 1, i),
            ppm_w=int(d.ppm_if[i - 1]) if i > 0 else -1,
            ppm_e=int(d.ppm_if[i + 1]) if i + 1 < nx else -1,
        )
        missing = frozenset(k for k, val in entries.items() if k != "segment" and val < 0)
        cols.append(InterfaceColumn(missing=missing, **entries))
    return cols
