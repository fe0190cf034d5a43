"""Numerical checks of the spectral and field-of-values properties of the
exact preconditioners.

Weighted norms use H = blockdiag(A, S_B, D) (optionally rho * A on the
velocity block). Everything H-weighted is computed through solves with the
factorized blocks; dense square roots only appear in the small-grid
cross-checks (``dense_sqrt``).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .krylov import SolverConfig, SolveReport, fgmres
from .linalg import NormIterationError, Spectrum, dense_eigenvalues, factor_spd
from .precond import Preconditioner, SchurHandler, make_preconditioner
from .system import BlockSystem

__all__ = [
    "SQRT5",
    "MBAR_VALUES",
    "GAMMA_TRI",
    "LinearMap",
    "WeightH",
    "EquivalenceReport",
    "CheckRecord",
    "weighted_operator_norm",
    "preconditioned_matrix",
    "spectrum_preconditioned",
    "pcon_quadratic_residuals",
    "norm_equivalence_constants",
    "fov_constants",
    "lemma_norm",
    "mbar_matrix",
    "mbar_eigencheck",
    "solve_weighted",
    "residual_bound_check",
    "dense_sqrt",
    "check_battery",
]

SQRT5 = np.sqrt(5.0)
MBAR_VALUES = np.array([(3 - SQRT5) / 2, 1.0, 2.0, (3 + SQRT5) / 2])
GAMMA_TRI = float(np.sqrt((3 + SQRT5) / 2))

Apply = Callable[[np.ndarray], np.ndarray]


@dataclass
class LinearMap:
    """A square operator with the four actions the weighted estimates need."""

    dim: int
    apply: Apply
    apply_T: Apply
    solve: Apply | None = None
    solve_T: Apply | None = None

    @classmethod
    def from_sparse(cls, M, factor: bool = True) -> "LinearMap":
        import scipy.sparse.linalg as spla

        M = M.tocsc()
        lu = spla.splu(M) if factor else None
        return cls(
            dim=M.shape[0],
            apply=lambda x: M @ x,
            apply_T=lambda x: M.T @ x,
            solve=(lambda x: lu.solve(x)) if lu is not None else None,
            solve_T=(lambda x: lu.solve(x, trans="T")) if lu is not None else None,
        )

    @classmethod
    def from_dense(cls, M: np.ndarray) -> "LinearMap":
        lu = sla.lu_factor(M)
        return cls(
            dim=M.shape[0],
            apply=lambda x: M @ x,
            apply_T=lambda x: M.T @ x,
            solve=lambda x: sla.lu_solve(lu, x),
            solve_T=lambda x: sla.lu_solve(lu, x, trans=1),
        )

    @classmethod
    def from_preconditioner(cls, P: Preconditioner) -> "LinearMap":
        """Exact preconditioners only: P and its transpose, forward and inverse."""
        if P.mode != "exact":
            raise ValueError("weighted estimates need an exact preconditioner")
        s = P.sys
        if P.kind in ("diag", "con"):
            # both are symmetric
            return cls(s.size, P.apply, P.apply, P.apply_inv, P.apply_inv)

        def apply_T(x):
            x1, x2, x3 = s.split(x)
            return np.concatenate([s.A @ x1, s.B @ x1 - P.schur.apply(x2), -(s.D @ x3)])

        def solve_T(r):
            r1, r2, r3 = s.split(r)
            x1 = P.velocity_inv(r1)
            x2 = -P.schur.solve(r2 - s.B @ x1)
            return np.concatenate([x1, x2, -P.darcy_inv(r3)])

        return cls(s.size, P.apply, apply_T, P.apply_inv, solve_T)

    def dense(self) -> np.ndarray:
        return np.stack([self.apply(e) for e in np.eye(self.dim)], axis=1)

    def dense_inverse(self) -> np.ndarray:
        return np.stack([self.solve(e) for e in np.eye(self.dim)], axis=1)


@dataclass
class WeightH:
    """H = blockdiag(rho A, S_B, D) with solves through block factorizations.

    ``inner(x, y)`` is the H^{-1} product <H^{-1} x, y>.
    """

    sys: BlockSystem
    schur: SchurHandler
    A_factor: object
    D_factor: object
    rho: float = 1.0

    @classmethod
    def build(cls, sys: BlockSystem, rho: float = 1.0, dense_schur: bool | None = None) -> "WeightH":
        if rho <= 0:
            raise ValueError("rho must be positive")
        if dense_schur is None:
            dense_schur = sys.m <= 2500
        FA = factor_spd(sys.A)
        return cls(sys, SchurHandler.exact(sys, FA, dense=dense_schur), FA, factor_spd(sys.D), rho)

    @property
    def dim(self) -> int:
        return self.sys.size

    def apply(self, x):
        x1, x2, x3 = self.sys.split(x)
        return np.concatenate([self.rho * (self.sys.A @ x1), self.schur.apply(x2), self.sys.D @ x3])

    def solve(self, r):
        r1, r2, r3 = self.sys.split(r)
        return np.concatenate([self.A_factor.solve(r1) / self.rho, self.schur.solve(r2), self.D_factor.solve(r3)])

    def inner(self, x, y) -> float:
        return float(self.solve(x) @ y)

    def norm(self, x) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def as_map(self) -> LinearMap:
        return LinearMap(self.dim, self.apply, self.apply, self.solve, self.solve)

    def inverse_weight(self) -> "_Weight":
        """The SPD weight W = H^{-1} defining the norm used throughout."""
        return _Weight(apply=self.solve, solve=self.apply)

    def dense(self) -> np.ndarray:
        s = self.sys
        return sla.block_diag(self.rho * s.A.toarray(), self.schur.dense_matrix(), s.D.toarray())


@dataclass
class _Weight:
    apply: Apply
    solve: Apply


@dataclass
class EquivalenceReport:
    gamma: float
    Gamma: float
    kind: str  # "Norm" or "FOV"
    grids: list = field(default_factory=list)
    per_grid: list = field(default_factory=list)
    uncertain: bool = False

    def __post_init__(self):
        if self.kind not in ("Norm", "FOV"):
            raise ValueError("kind must be 'Norm' or 'FOV'")

    def drift(self) -> tuple[float, float]:
        """Largest relative change of (gamma, Gamma) across the stored grids."""
        if len(self.per_grid) < 2:
            return 0.0, 0.0
        g = np.array([p[0] for p in self.per_grid])
        G = np.array([p[1] for p in self.per_grid])
        return (
            float((g.max() - g.min()) / np.abs(g).max()),
            float((G.max() - G.min()) / np.abs(G).max()),
        )


@dataclass
class CheckRecord:
    name: str
    passed: bool
    value: float | list | None = None
    threshold: float | None = None
    detail: str = ""

    def to_text(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def weighted_operator_norm(
    apply: Apply,
    apply_T: Apply,
    dim: int,
    W_in: _Weight | None = None,
    W_out: _Weight | None = None,
    tol: float = 1e-8,
    maxit: int = 10000,
    seed: int = 0,
) -> float:
    """sup ||T x||_{W_out} / ||x||_{W_in} by power iteration on T* T.

    T* = W_in^{-1} T^T W_out is the adjoint between the two weighted spaces,
    so T* T is self-adjoint in the W_in product. Identity weights when None.
    """
    wi_apply = (lambda x: x) if W_in is None else W_in.apply
    wi_solve = (lambda x: x) if W_in is None else W_in.solve
    wo_apply = (lambda x: x) if W_out is None else W_out.apply
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim)
    x /= np.sqrt(x @ wi_apply(x))
    prev = est = 0.0
    for _ in range(maxit):
        Tx = apply(x)
        est = float(np.sqrt(max(Tx @ wo_apply(Tx), 0.0)))  # ||x||_{W_in} = 1
        y = wi_solve(apply_T(wo_apply(Tx)))
        ny = np.sqrt(max(y @ wi_apply(y), 0.0))
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(est - prev) <= tol * max(est, 1e-300):
            return est
        prev = est
    raise NormIterationError(f"weighted power iteration stalled at {prev:.12g}, {est:.12g}")


# ---------------------------------------------------------------- spectra


def preconditioned_matrix(sys: BlockSystem, P, cap: int = 4000) -> np.ndarray:
    """Dense A P^{-1}, column by column."""
    N = sys.size
    if N > cap:
        raise ValueError(f"system of size {N} exceeds dense cap {cap}; use a coarser grid")
    apply_inv = P.apply_inv if hasattr(P, "apply_inv") else P
    Pinv = np.stack([apply_inv(e) for e in np.eye(N)], axis=1)
    return sys.matrix @ Pinv


def spectrum_preconditioned(sys: BlockSystem, P, cap: int = 4000, check: bool = True) -> Spectrum:
    return dense_eigenvalues(preconditioned_matrix(sys, P, cap), cap=cap, check=check)


def pcon_quadratic_residuals(sys: BlockSystem, P: Preconditioner, one_tol: float = 1e-8):
    """Eigen-decompose A P_con^{-1} and test every eigenvalue away from 1 against

        lambda^2 - lambda (eta + 1) + (eta + xi) = 0,
        eta = x*Ax / x*Gx,  xi = x*C^T D^{-1} C x / x*Gx,

    where (x; y; z) = P^{-1} w for the eigenvector w. Returns the eigenvalues,
    the residuals (nan where lambda is within ``one_tol`` of 1) and the
    (eta, xi) pairs.
    """
    if P.kind != "con" or P.mode != "exact":
        raise ValueError("needs the exact constraint preconditioner")
    M = preconditioned_matrix(sys, P)
    lam, W = sla.eig(M)
    C = sys.C1
    FD = factor_spd(sys.D)
    n = sys.n
    res = np.full(lam.shape, np.nan)
    eta = np.full(lam.shape, np.nan)
    xi = np.full(lam.shape, np.nan)
    Wr, Wi = W.real, W.imag
    for k, l in enumerate(lam):
        if abs(l - 1) <= one_tol:
            continue
        vr = P.apply_inv(Wr[:, k])
        vi = P.apply_inv(Wi[:, k])
        xr, xi_ = vr[:n], vi[:n]
        # Hermitian forms of real symmetric matrices on x = xr + i xi
        def herm(apply):
            return xr @ apply(xr) + xi_ @ apply(xi_)

        g = herm(lambda v: P.G @ v)
        a = herm(lambda v: sys.A @ v)
        c = herm(lambda v: C.T @ FD.solve(C @ v))
        eta[k], xi[k] = a / g, c / g
        res[k] = abs(l * l - l * (eta[k] + 1) + eta[k] + xi[k])
    return lam, res, np.stack([eta, xi], axis=1)


# ------------------------------------------------------ equivalence checks


def norm_equivalence_constants(
    M: LinearMap,
    N: LinearMap,
    H: WeightH,
    method: str = "power",
    tol: float = 1e-10,
    maxit: int = 10000,
    seed: int = 0,
) -> EquivalenceReport:
    """gamma <= ||M x||_{H^{-1}} / ||N x||_{H^{-1}} <= Gamma.

    ``power``: Gamma = ||M N^{-1}||_{H^{-1}}, gamma = 1 / ||N M^{-1}||_{H^{-1}}
    by weighted power iteration. ``dense``: extreme eigenvalues of the pencil
    (M^T W M, N^T W N) with W = H^{-1}, for small systems.
    """
    h = H.sys.grid.hx
    if method == "dense":
        W = np.linalg.inv(H.dense())
        Md, Nd = M.dense(), N.dense()
        ev = sla.eigh(Md.T @ W @ Md, Nd.T @ W @ Nd, eigvals_only=True)
        g, G = float(np.sqrt(ev[0])), float(np.sqrt(ev[-1]))
        return EquivalenceReport(g, G, "Norm", [h], [(g, G)])
    if method != "power":
        raise ValueError("method must be 'power' or 'dense'")
    W = H.inverse_weight()
    uncertain = False
    try:
        G = weighted_operator_norm(
            lambda x: M.apply(N.solve(x)), lambda x: N.solve_T(M.apply_T(x)), M.dim, W, W, tol, maxit, seed
        )
        g = 1.0 / weighted_operator_norm(
            lambda x: N.apply(M.solve(x)), lambda x: M.solve_T(N.apply_T(x)), M.dim, W, W, tol, maxit, seed
        )
    except NormIterationError:
        uncertain = True
        g, G = float("nan"), float("nan")
    return EquivalenceReport(g, G, "Norm", [h], [(g, G)], uncertain=uncertain)


def fov_constants(
    sys: BlockSystem,
    P,
    H: WeightH,
    tol: float = 1e-10,
    maxit: int = 10000,
    seed: int = 0,
    cap: int = 4000,
) -> EquivalenceReport:
    """H^{-1}-FOV constants of T = A P^{-1}.

    gamma: smallest eigenvalue of the pencil (sym(W T), W), W = H^{-1}, by a
    dense symmetric eigensolve. Gamma: ||T||_{H^{-1}} by weighted power
    iteration. ``P`` may be a Preconditioner or a LinearMap.
    """
    Pm = P if isinstance(P, LinearMap) else LinearMap.from_preconditioner(P)
    Amat = sys.matrix
    T = preconditioned_matrix(sys, Pm.solve, cap)
    W = np.linalg.inv(H.dense())
    W = 0.5 * (W + W.T)
    WT = W @ T
    g = float(sla.eigh(0.5 * (WT + WT.T), W, eigvals_only=True)[0])
    Wop = H.inverse_weight()
    uncertain = False
    try:
        G = weighted_operator_norm(
            lambda x: Amat @ Pm.solve(x), lambda x: Pm.solve_T(Amat.T @ x), sys.size, Wop, Wop, tol, maxit, seed
        )
    except NormIterationError:
        G, uncertain = float("nan"), True
    h = sys.grid.hx
    return EquivalenceReport(g, G, "FOV", [h], [(g, G)], uncertain=uncertain)


def lemma_norm(sys: BlockSystem, H: WeightH | None = None, tol: float = 1e-12) -> float:
    """||S_B^{-1/2} B A^{-1/2}||_2 = sup ||B x||_{S_B^{-1}} / ||x||_A."""
    H = H or WeightH.build(sys)
    WA = _Weight(apply=lambda x: sys.A @ x, solve=H.A_factor.solve)
    WS = _Weight(apply=H.schur.solve, solve=H.schur.apply)
    B = sys.B
    return weighted_operator_norm(lambda x: B @ x, lambda y: B.T @ y, sys.n, WA, WS, tol=tol)


def mbar_matrix(sys: BlockSystem, H: WeightH | None = None) -> np.ndarray:
    """Dense matrix similar to [[I + Pi, K], [K^T, I]], K = A^{-1/2} B^T S_B^{-1/2}.

    Conjugating with blockdiag(A^{1/2}, S_B^{1/2}) removes the square roots:
    [[I + A^{-1} B^T S_B^{-1} B, A^{-1} B^T], [S_B^{-1} B, I]].
    """
    H = H or WeightH.build(sys, dense_schur=True)
    Bd = sys.B.toarray()
    AinvBT = H.A_factor.solve(Bd.T)
    SinvB = H.schur.solve(Bd) if H.schur._chol is not None else np.linalg.solve(H.schur.dense_matrix(), Bd)
    n, m = sys.n, sys.m
    top = np.hstack([np.eye(n) + AinvBT @ SinvB, AinvBT])
    bot = np.hstack([SinvB, np.eye(m)])
    return np.vstack([top, bot])


def mbar_eigencheck(sys: BlockSystem, tol: float = 1e-6) -> CheckRecord:
    H = WeightH.build(sys, dense_schur=True)
    Mb = mbar_matrix(sys, H)
    lam = sla.eigvals(Mb)
    dist = np.min(np.abs(lam[:, None] - MBAR_VALUES[None, :]), axis=1)
    n = sys.n
    Pi = Mb[:n, :n] - np.eye(n)
    idem = float(np.linalg.norm(Pi @ Pi - Pi, 2) / max(np.linalg.norm(Pi, 2), 1.0))
    counts = [int(np.sum(np.abs(lam - v) <= tol)) for v in MBAR_VALUES]
    return CheckRecord(
        name=f"mbar_eigenvalues_h={sys.grid.hx:g}",
        passed=bool(dist.max() <= tol and idem <= 1e-8),
        value=float(dist.max()),
        threshold=tol,
        detail=f"multiplicities {counts} of {[round(float(v), 6) for v in MBAR_VALUES]}; projector defect {idem:.2e}",
    )


# -------------------------------------------------------- residual bound


def solve_weighted(
    sys: BlockSystem, P, H: WeightH, config: SolverConfig = SolverConfig(), b: np.ndarray | None = None
) -> SolveReport:
    """FGMRES with Arnoldi and minimisation in the H^{-1} inner product.

    ``b`` defaults to the system right-hand side, or to a seeded random
    vector when that is zero.
    """
    apply_inv = P.apply_inv if hasattr(P, "apply_inv") else P
    if b is None:
        b = sys.rhs if np.any(sys.rhs) else np.random.default_rng(0).standard_normal(sys.size)
    return fgmres(lambda x: sys.matrix @ x, apply_inv, b, config, inner=H.solve)


def residual_bound_check(report: SolveReport, gamma: float, Gamma: float, restart: int | None = None, slack: float = 1e-12):
    """Per-step booleans for ||r_s|| / ||r_0|| <= (1 - gamma^2/Gamma^2)^{s/2}
    over the first restart cycle (weighted residuals from ``report``)."""
    hist = np.asarray(report.weighted_history)
    if hist.size == 0:
        raise ValueError("report carries no weighted residuals; solve with an inner product")
    steps = hist.size - 1 if restart is None else min(restart, hist.size - 1)
    q = max(1.0 - (gamma / Gamma) ** 2, 0.0)
    out = []
    for s in range(1, steps + 1):
        bound = q ** (s / 2)
        out.append(bool(hist[s] / hist[0] <= bound + slack))
    return out


# ---------------------------------------------------- dense cross-checks


def dense_sqrt(H: np.ndarray, power: float) -> np.ndarray:
    """H^power for SPD H through a symmetric eigendecomposition."""
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    if w.min() <= 0:
        raise ValueError("matrix is not SPD")
    return (V * w**power) @ V.T


def check_battery(h_small: Sequence[float] = (1 / 4, 1 / 8), h_fov: Sequence[float] = (1 / 8, 1 / 16), params=None):
    """Run the analysis checks on small grids; yields CheckRecords."""
    from .grid import GridSpec, build_grid
    from .system import PhysicalParams, assemble_coupled

    params = params or PhysicalParams.isotropic()
    for h in h_small:
        sys = assemble_coupled(build_grid(GridSpec.uniform(h)), params, None, "BJS")
        H = WeightH.build(sys, dense_schur=True)
        val = lemma_norm(sys, H)
        yield CheckRecord(f"lemma_norm_h={h:g}", abs(val - 1) <= 1e-6, val, 1e-6)
        yield mbar_eigencheck(sys)
        for kind, bound in (("diag", 1.0), ("tri", GAMMA_TRI)):
            P = make_preconditioner(sys, kind, "exact", dense_schur=True)
            rep = norm_equivalence_constants(H.as_map(), LinearMap.from_preconditioner(P), H)
            yield CheckRecord(f"norm_equiv_H_P{kind}_h={h:g}", rep.Gamma <= bound + 1e-6, rep.Gamma, bound)
    per = []
    for h in h_fov:
        sys = assemble_coupled(build_grid(GridSpec.uniform(h)), params, None, "BJS")
        H = WeightH.build(sys, dense_schur=True)
        P = make_preconditioner(sys, "tri", "exact", dense_schur=True)
        rep = fov_constants(sys, P, H)
        per.append((rep.gamma, rep.Gamma))
        yield CheckRecord(
            f"fov_Ptri_h={h:g}", rep.gamma >= 0.5 - 1e-6, [rep.gamma, rep.Gamma], 0.5,
            "lower bound 1/2 assumes the D^{-1} C A^{-1} B^T S_B^{-1} cross term is negligible",
        )
        if h == h_fov[0]:
            wrep = solve_weighted(sys, P, H)
            ok = residual_bound_check(wrep, rep.gamma, rep.Gamma, restart=20)
            yield CheckRecord(f"residual_bound_Ptri_h={h:g}", all(ok), float(np.mean(ok)), 1.0)
    eq = EquivalenceReport(min(p[0] for p in per), max(p[1] for p in per), "FOV", list(h_fov), per)
    dg, dG = eq.drift()
    yield CheckRecord("fov_drift_Ptri", max(dg, dG) <= 0.10, [dg, dG], 0.10)
