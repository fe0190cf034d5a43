"""Sparse/dense kernels shared by the rest of the package.

Sparse matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted
column indices, no stored zeros). SPD factorizations go through SuperLU run
without row pivoting, so every pivot is visible and a non-positive one is
reported as "not SPD".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "NotSPDError",
    "EigenConvergenceError",
    "NormIterationError",
    "finalize",
    "spmv",
    "SpdFactorization",
    "factor_spd",
    "solve_spd",
    "Spectrum",
    "dense_eigenvalues",
    "operator_norm2",
    "write_coordinate",
    "read_coordinate",
]


class NotSPDError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    pass


class NormIterationError(RuntimeError):
    pass


def finalize(M) -> sp.csr_matrix:
    """Canonical CSR: duplicates summed, indices sorted, explicit zeros dropped."""
    M = sp.csr_matrix(M, dtype=np.float64)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def spmv(M, x: np.ndarray) -> np.ndarray:
    if M.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {M.shape} @ {x.shape}")
    return M @ x


@dataclass
class SpdFactorization:
    """Sparse LDL^T-equivalent factor of an SPD matrix (symmetric ordering)."""

    lu: object
    n: int
    min_pivot: float
    _dense: np.ndarray | None = field(default=None, repr=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has {b.shape[0]} rows, factor has {self.n}")
        return self.lu.solve(b)

    __call__ = solve


def factor_spd(M, check_symmetry: bool = True, sym_tol: float = 1e-12) -> SpdFactorization:
    M = finalize(M)
    n, ncols = M.shape
    if n != ncols:
        raise ValueError("matrix must be square")
    if check_symmetry:
        asym = abs(M - M.T).max() if M.nnz else 0.0
        scale = abs(M).max() if M.nnz else 1.0
        if asym > sym_tol * scale:
            raise NotSPDError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    lu = spla.splu(
        M.tocsc(),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotSPDError("factorization needed off-diagonal pivoting")
    piv = lu.U.diagonal()
    min_pivot = float(piv.min()) if n else 1.0
    if n and (min_pivot <= 0.0 or not np.all(np.isfinite(piv))):
        raise NotSPDError(f"non-positive pivot {min_pivot:.3e}")
    return SpdFactorization(lu=lu, n=n, min_pivot=min_pivot)


def solve_spd(F: SpdFactorization, b: np.ndarray) -> np.ndarray:
    return F.solve(b)


@dataclass
class Spectrum:
    values: np.ndarray
    source: str = "dense"

    def __len__(self) -> int:
        return len(self.values)

    def fraction_near(self, centres, radius: float) -> float:
        lam = np.asarray(self.values)
        c = np.asarray(list(centres), dtype=complex)
        dist = np.min(np.abs(lam[:, None] - c[None, :]), axis=1)
        return float(np.mean(dist <= radius))

    def min_modulus(self) -> float:
        return float(np.min(np.abs(self.values)))


def _inverse_iteration_residual(M: np.ndarray, lam: complex, rng) -> float:
    n = M.shape[0]
    shift = lam + (1e-10 * max(1.0, abs(lam))) * (1 + 1j)
    lu = sla.lu_factor(M.astype(complex) - shift * np.eye(n))
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for _ in range(3):
        v = sla.lu_solve(lu, v)
        v /= np.linalg.norm(v)
    return float(np.linalg.norm(M @ v - lam * v))


def dense_eigenvalues(M, cap: int = 4000, check: bool = True, seed: int = 0) -> Spectrum:
    """All eigenvalues of a dense square matrix (LAPACK Hessenberg + shifted QR).

    With ``check``, five eigenpairs are rebuilt by inverse iteration and their
    residuals compared to ``1e-8 * ||M||``.
    """
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    n = M.shape[0]
    if n > cap:
        raise ValueError(f"dimension {n} exceeds dense cap {cap}; use a smaller grid")
    try:
        lam = sla.eigvals(M, check_finite=True)
    except sla.LinAlgError as exc:
        raise EigenConvergenceError(f"QR iteration did not converge: {exc}") from exc
    if check and n:
        rng = np.random.default_rng(seed)
        norm = max(np.linalg.norm(M, 2) if n <= 500 else np.linalg.norm(M, "fro"), 1e-300)
        for k in rng.choice(n, size=min(5, n), replace=False):
            res = _inverse_iteration_residual(M, lam[k], rng)
            if res > 1e-8 * norm:
                raise EigenConvergenceError(
                    f"eigenpair check failed at lambda={lam[k]:.6g}: residual {res:.3e}"
                )
    return Spectrum(values=lam, source="dense")


def operator_norm2(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    apply_adjoint: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-8,
    maxit: int = 10000,
    seed: int = 0,
) -> float:
    """Largest singular value by power iteration on the normal operator.

    Without ``apply_adjoint`` the operator is taken to be symmetric.
    """
    adj = apply if apply_adjoint is None else apply_adjoint
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    prev = 0.0
    est = 0.0
    for _ in range(maxit):
        y = adj(apply(x))
        est = float(np.sqrt(max(np.dot(x, y), 0.0)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(est - prev) <= tol * max(est, 1e-300):
            return est
        prev = est
    raise NormIterationError(f"power iteration stalled; last iterates {prev:.12g}, {est:.12g}")


def write_coordinate(path, M, comment: str = "") -> None:
    """Write a sparse matrix (or a vector as an N x 1 matrix) in Matrix Market
    coordinate format."""
    if not sp.issparse(M):
        M = sp.coo_matrix(np.asarray(M, dtype=np.float64).reshape(-1, 1))
    scipy.io.mmwrite(str(path), sp.coo_matrix(M), comment=comment, field="real", precision=17)


def read_coordinate(path) -> sp.csr_matrix:
    return finalize(scipy.io.mmread(str(path)))
