"""Block preconditioners for the coupled system, exact and AMG-based.

All three families act on ``r = (r1; r2; r3)`` split as velocity, free-flow
pressure and porous pressure:

* diag:  blockdiag(A, -S_B, -D)
* tri:   [[A, B^T, 0], [0, -S_B, 0], [0, 0, -D]]
* con:   [[G, B^T, 0], [B, 0, 0], [0, 0, -D]],  G = blockdiag(A11, A22)

Exact variants use sparse factorizations and the true Schur complement
S_B = B A^{-1} B^T; inexact variants swap every block inverse for one AMG
V-cycle and S_B for (2 mu)^{-1} hx hy I.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .amg import DEFAULT_THETA as AMG_THETA, amg_setup
from .linalg import SpdFactorization, factor_spd, finalize
from .system import BlockSystem

__all__ = [
    "InnerSolveError",
    "SchurHandler",
    "Preconditioner",
    "make_pdiag",
    "make_ptri",
    "make_pcon",
    "make_preconditioner",
    "KINDS",
    "MODES",
    "AMG_THETA",
]

KINDS = ("diag", "tri", "con")
MODES = ("exact", "inexact")


class InnerSolveError(RuntimeError):
    pass


def _cg(apply, b, tol, maxiter, M=None, what="inner CG"):
    """Preconditioned CG to relative residual ``tol``; raises past ``maxiter``."""
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0
    r = b.copy()
    z = r if M is None else M(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        a = rz / (p @ Ap)
        x += a * p
        r -= a * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = r if M is None else M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise InnerSolveError(f"{what} did not reach {tol:g} in {maxiter} iterations")


@dataclass
class SchurHandler:
    """Application of S_B^{-1} (and S_B) in one of two modes.

    ``exact``: S_B = B A^{-1} B^T through a factorization of A; solves by CG
    to ``tol`` or, with ``dense=True``, by a dense Cholesky of the formed S_B.
    ``mass``: the scaled identity (2 mu)^{-1} hx hy I.
    """

    mode: str
    B: sp.csr_matrix
    A_factor: SpdFactorization | None = None
    scale: float = 1.0
    tol: float = 1e-10
    maxiter: int = 2000
    dense: bool = False
    inner_iterations: list = field(default_factory=list, repr=False)
    _chol: tuple | None = field(default=None, repr=False)
    _S: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def exact(cls, sys: BlockSystem, A_factor: SpdFactorization | None = None, dense: bool = False, tol: float = 1e-10):
        F = A_factor if A_factor is not None else factor_spd(sys.A)
        h = cls(mode="exact", B=sys.B, A_factor=F, tol=tol, dense=dense)
        if dense:
            S = sys.B @ F.solve(sys.B.T.toarray())
            S = 0.5 * (S + S.T)
            h._S = S
            h._chol = sla.cho_factor(S)
        return h

    @classmethod
    def mass(cls, sys: BlockSystem):
        g = sys.grid
        return cls(mode="mass", B=sys.B, scale=g.hx * g.hy / (2 * sys.params.mu))

    def apply(self, y: np.ndarray) -> np.ndarray:
        if self.mode == "mass":
            return self.scale * y
        if self._S is not None:
            return self._S @ y
        return self.B @ self.A_factor.solve(self.B.T @ y)

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self.mode == "mass":
            return r / self.scale
        if self._chol is not None:
            return sla.cho_solve(self._chol, r)
        x, it = _cg(self.apply, np.asarray(r, dtype=float), self.tol, self.maxiter, what="S_B solve")
        self.inner_iterations.append(it)
        return x

    def dense_matrix(self) -> np.ndarray:
        if self.mode == "mass":
            return self.scale * np.eye(self.B.shape[0])
        if self._S is None:
            S = self.B @ self.A_factor.solve(self.B.T.toarray())
            self._S = 0.5 * (S + S.T)
        return self._S


def _split_velocity(sys):
    su, sv = sys.velocity_split()
    A = sys.A
    return su, sv, finalize(A[su, su]), finalize(A[sv, sv])


def _component_solver(sys, mode, theta):
    """blockdiag(A11, A22)^{-1}: per-component factorization or AMG cycle."""
    su, sv, A11, A22 = _split_velocity(sys)
    if mode == "exact":
        F1, F2 = factor_spd(A11), factor_spd(A22)
        s1, s2 = F1.solve, F2.solve
    else:
        s1, s2 = amg_setup(A11, theta=theta), amg_setup(A22, theta=theta)

    def apply(r):
        out = np.empty_like(r)
        out[su] = s1(r[su])
        out[sv] = s2(r[sv])
        return out

    return apply, (s1, s2)


@dataclass
class Preconditioner:
    """Right preconditioner: ``apply_inv`` realises P^{-1}, ``apply`` P."""

    kind: str
    mode: str
    sys: BlockSystem
    velocity_inv: Callable
    darcy_inv: Callable
    schur: SchurHandler | None = None
    pressure_inv: Callable | None = None  # constraint variant: (y_p rhs) -> y_p
    G: sp.csr_matrix | None = None
    saddle_solve: Callable | None = None  # exact constraint variant: (r1, r2) -> (x1, x2)
    setup_time: float = 0.0
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def label(self) -> str:
        return f"{'P' if self.mode == 'exact' else 'P^'}_{self.kind}"

    def apply_inv(self, r: np.ndarray) -> np.ndarray:
        s = self.sys
        r1, r2, r3 = s.split(np.asarray(r, dtype=float))
        x3 = -self.darcy_inv(r3)
        if self.saddle_solve is not None:
            x1, x2 = self.saddle_solve(r1, r2)
        elif self.kind == "diag":
            x1 = self.velocity_inv(r1)
            x2 = -self.schur.solve(r2)
        elif self.kind == "tri":
            x2 = -self.schur.solve(r2)
            x1 = self.velocity_inv(r1 - s.B.T @ x2)
        else:
            w = self.velocity_inv(r1)
            x2 = self.pressure_inv(s.B @ w - r2)
            x1 = w - self.velocity_inv(s.B.T @ x2)
        return np.concatenate([x1, x2, x3])

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.apply_inv(r)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Forward product P x (exact variants; inexact ones use their
        approximate blocks, so only the exact forward map is meaningful)."""
        s = self.sys
        x1, x2, x3 = s.split(np.asarray(x, dtype=float))
        y3 = -(s.D @ x3)
        if self.kind == "diag":
            return np.concatenate([s.A @ x1, -self.schur.apply(x2), y3])
        if self.kind == "tri":
            return np.concatenate([s.A @ x1 + s.B.T @ x2, -self.schur.apply(x2), y3])
        return np.concatenate([self.G @ x1 + s.B.T @ x2, s.B @ x1, y3])

    def matrix(self) -> sp.csr_matrix:
        """Sparse P for the variants that have one (everything but S_B blocks)."""
        s = self.sys
        if self.kind != "con":
            raise ValueError("only the constraint preconditioner is sparse")
        Z = None
        return finalize(
            sp.bmat(
                [[self.G, s.B.T, Z], [s.B, Z, Z], [Z, Z, -s.D]],
                format="csr",
            )
        )


def _darcy_inv(sys, mode, theta):
    if mode == "exact":
        return factor_spd(sys.D).solve
    return amg_setup(sys.D, theta=theta)


def _check_mode(mode):
    mode = mode.lower()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def make_pdiag(sys: BlockSystem, mode: str = "exact", dense_schur: bool = False, theta: float = AMG_THETA) -> Preconditioner:
    mode = _check_mode(mode)
    t0 = time.perf_counter()
    if mode == "exact":
        FA = factor_spd(sys.A)
        vel = FA.solve
        schur = SchurHandler.exact(sys, FA, dense=dense_schur)
    else:
        vel, _ = _component_solver(sys, mode, theta)
        schur = SchurHandler.mass(sys)
    dinv = _darcy_inv(sys, mode, theta)
    return Preconditioner("diag", mode, sys, vel, dinv, schur=schur, setup_time=time.perf_counter() - t0)


def make_ptri(sys: BlockSystem, mode: str = "exact", dense_schur: bool = False, theta: float = AMG_THETA) -> Preconditioner:
    P = make_pdiag(sys, mode, dense_schur=dense_schur, theta=theta)
    P.kind = "tri"
    return P


def make_pcon(
    sys: BlockSystem,
    mode: str = "exact",
    inner_tol: float = 1e-6,
    inner_maxiter: int = 500,
    theta: float = AMG_THETA,
    G: sp.spmatrix | None = None,
) -> Preconditioner:
    """Constraint preconditioner with G = blockdiag(A11, A22).

    Exact mode factorizes the saddle block [[G, B^T], [B, 0]] once, which
    equals the block inverse built from S_G = B G^{-1} B^T. Inexact mode
    replaces G^{-1} by AMG cycles and solves with B G^^{-1} B^T by CG to
    ``inner_tol`` (capped at ``inner_maxiter``). ``G`` may be overridden in
    exact mode (testing aid).
    """
    mode = _check_mode(mode)
    t0 = time.perf_counter()
    su, sv, A11, A22 = _split_velocity(sys)
    if G is None:
        G = finalize(sp.block_diag([A11, A22]))
    else:
        G = finalize(G)
    B = sys.B
    n = sys.n
    dinv = _darcy_inv(sys, mode, theta)

    if mode == "exact":
        K = sp.bmat([[G, B.T], [B, None]], format="csc")
        lu = spla.splu(K, permc_spec="COLAMD")  # indefinite: partial pivoting, column ordering

        def saddle_solve(r1, r2):
            sol = lu.solve(np.concatenate([r1, r2]))
            return sol[:n], sol[n:]

        P = Preconditioner("con", mode, sys, None, dinv, G=G, saddle_solve=saddle_solve,
                           setup_time=time.perf_counter() - t0)
        P.parts["saddle_lu"] = lu
        return P

    ginv, _ = _component_solver(sys, mode, theta)
    counts: list[int] = []

    def pressure_inv(rhs):
        y, it = _cg(lambda q: B @ ginv(B.T @ q), rhs, inner_tol, inner_maxiter, what="constraint Schur CG")
        counts.append(it)
        return y

    P = Preconditioner("con", mode, sys, ginv, dinv, pressure_inv=pressure_inv, G=G,
                       setup_time=time.perf_counter() - t0)
    P.parts["inner_iterations"] = counts
    return P


def make_preconditioner(sys: BlockSystem, kind: str, mode: str = "exact", **kw) -> Preconditioner:
    kind = kind.lower()
    if kind == "diag":
        return make_pdiag(sys, mode, **kw)
    if kind == "tri":
        return make_ptri(sys, mode, **kw)
    if kind == "con":
        return make_pcon(sys, mode, **kw)
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
