"""Smoothed-aggregation algebraic multigrid for SPD blocks.

One V-cycle (damped Jacobi, one pre- and one post-sweep, dense Cholesky on
the coarsest level) is a fixed symmetric linear operator, so it can serve as
an inexact block inverse inside both FGMRES and CG.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .linalg import finalize

DEFAULT_THETA = 0.15

__all__ = ["DEFAULT_THETA", "AmgError", "AmgLevel", "AmgHierarchy", "amg_setup", "amg_vcycle", "vcycle_contraction"]


class AmgError(RuntimeError):
    pass


@dataclass
class AmgLevel:
    A: sp.csr_matrix
    Dinv: np.ndarray
    P: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None


@dataclass
class AmgHierarchy:
    levels: list
    coarse_factor: tuple
    theta: float = DEFAULT_THETA
    omega: float = 2.0 / 3.0
    presmooth: int = 1
    postsmooth: int = 1
    aggregates: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return self.levels[0].A.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [lvl.A.shape[0] for lvl in self.levels]

    @property
    def operator_complexity(self) -> float:
        return sum(lvl.A.nnz for lvl in self.levels) / self.levels[0].A.nnz

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return amg_vcycle(self, r)


def strength_graph(A: sp.csr_matrix, theta: float) -> sp.csr_matrix:
    """Symmetric strength: |a_ij| >= theta * sqrt(a_ii a_jj), i != j."""
    A = A.tocoo()
    d = np.sqrt(np.abs(A.tocsr().diagonal()))
    keep = (A.row != A.col) & (np.abs(A.data) >= theta * d[A.row] * d[A.col])
    S = sp.csr_matrix(
        (np.ones(keep.sum()), (A.row[keep], A.col[keep])), shape=A.shape
    )
    S.sum_duplicates()
    return S


def standard_aggregation(S: sp.csr_matrix) -> np.ndarray:
    """Three-pass greedy aggregation; returns the aggregate id of every node."""
    n = S.shape[0]
    indptr, indices = S.indptr, S.indices
    agg = -np.ones(n, dtype=np.int64)
    count = 0
    # pass 1: seed aggregates whose whole neighbourhood is free
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = indices[indptr[i] : indptr[i + 1]]
        if nbrs.size == 0:
            continue
        if np.all(agg[nbrs] < 0):
            agg[i] = count
            agg[nbrs] = count
            count += 1
    # pass 2: attach leftovers to a neighbouring aggregate
    snapshot = agg.copy()
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = indices[indptr[i] : indptr[i + 1]]
        owned = snapshot[nbrs]
        owned = owned[owned >= 0]
        if owned.size:
            agg[i] = owned[0]
    # pass 3: whatever remains forms new aggregates (isolated nodes included)
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = indices[indptr[i] : indptr[i + 1]]
        free = nbrs[agg[nbrs] < 0]
        agg[i] = count
        agg[free] = count
        count += 1
    return agg


def _spectral_radius_DinvA(A, Dinv, iters: int = 20, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.random(A.shape[0]) + 0.5
    lam = 1.0
    for _ in range(iters):
        y = Dinv * (A @ x)
        lam = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
    return float(lam)


def amg_setup(
    M,
    theta: float = DEFAULT_THETA,
    omega: float = 2.0 / 3.0,
    max_coarse: int = 200,
    max_levels: int = 25,
    min_ratio: float = 1.2,
) -> AmgHierarchy:
    A = finalize(M)
    levels = []
    aggregates = []
    while True:
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise AmgError("AMG needs a positive diagonal")
        Dinv = 1.0 / diag
        if A.shape[0] <= max_coarse or len(levels) + 1 >= max_levels:
            levels.append(AmgLevel(A=A, Dinv=Dinv))
            break
        agg = standard_aggregation(strength_graph(A, theta))
        nc = int(agg.max()) + 1
        if A.shape[0] / nc < min_ratio:
            raise AmgError(
                f"aggregation stagnated: {A.shape[0]} -> {nc} (ratio {A.shape[0] / nc:.3f})"
            )
        # piecewise-constant tentative prolongator, rows sum to one
        T = sp.csr_matrix((np.ones(A.shape[0]), (np.arange(A.shape[0]), agg)), shape=(A.shape[0], nc))
        w = (4.0 / 3.0) / _spectral_radius_DinvA(A, Dinv)
        P = finalize(T - w * (sp.diags(Dinv) @ (A @ T)))
        R = finalize(P.T)
        levels.append(AmgLevel(A=A, Dinv=Dinv, P=P, R=R))
        aggregates.append(agg)
        A = finalize(R @ A @ P)
        A = finalize((A + A.T) * 0.5)
    coarse = levels[-1].A.toarray()
    try:
        factor = sla.cho_factor(coarse)
    except sla.LinAlgError as exc:
        raise AmgError("coarsest matrix is not SPD") from exc
    return AmgHierarchy(levels=levels, coarse_factor=factor, theta=theta, omega=omega, aggregates=aggregates)


def amg_vcycle(h: AmgHierarchy, r: np.ndarray) -> np.ndarray:
    return _cycle(h, 0, np.asarray(r, dtype=np.float64))


def _cycle(h: AmgHierarchy, k: int, b: np.ndarray) -> np.ndarray:
    lvl = h.levels[k]
    if k == len(h.levels) - 1:
        return sla.cho_solve(h.coarse_factor, b)
    A, Dinv, om = lvl.A, lvl.Dinv, h.omega
    x = om * Dinv * b
    for _ in range(h.presmooth - 1):
        x = x + om * Dinv * (b - A @ x)
    x = x + lvl.P @ _cycle(h, k + 1, lvl.R @ (b - A @ x))
    for _ in range(h.postsmooth):
        x = x + om * Dinv * (b - A @ x)
    return x


def vcycle_contraction(h: AmgHierarchy, iters: int = 30, seed: int = 0) -> float:
    """Energy-norm contraction of the error propagator I - V A (power iteration)."""
    A = h.levels[0].A
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(A.shape[0])
    rho = 0.0
    for _ in range(iters):
        e = e / np.sqrt(e @ (A @ e))
        e_new = e - amg_vcycle(h, A @ e)
        rho = float(np.sqrt(e_new @ (A @ e_new)))
        e = e_new
    return rho
