"""Restarted flexible GMRES with right preconditioning."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["SolverConfig", "SolveReport", "fgmres"]

Apply = Callable[[np.ndarray], np.ndarray]

_REORTH = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class SolverConfig:
    restart: int = 20
    tol: float = 1e-8
    maxit: int = 2000
    record_history: bool = True

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.maxit < self.restart:
            raise ValueError("maxit must be >= restart")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0
    final_x: Optional[np.ndarray] = None
    # ||r_s||_W for s = 0, 1, ... when a weighted inner product was used
    weighted_history: list = field(default_factory=list)
    estimate_history: list = field(default_factory=list)
    orthogonality_loss: list = field(default_factory=list)
    restarts: int = 0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


def fgmres(
    apply_A: Apply,
    apply_Pinv: Apply | None,
    b: np.ndarray,
    config: SolverConfig = SolverConfig(),
    x0: np.ndarray | None = None,
    inner: Apply | None = None,
) -> SolveReport:
    """Solve ``A x = b`` by FGMRES(restart) from ``x0`` (default zero).

    ``apply_Pinv`` may change between calls; the preconditioned directions are
    stored. One iteration is one Arnoldi step. Convergence is judged on the
    true residual ``||b - A x||_2 <= tol ||b||_2``. With ``inner`` (an SPD
    operator W) the Arnoldi process and the residual minimisation use
    ``<x, y>_W = x^T W y`` instead of the Euclidean product.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=np.float64)
    N = b.shape[0]
    P = (lambda r: r) if apply_Pinv is None else apply_Pinv
    W = inner

    def dot(x, y):
        return float(x @ (W(y) if W is not None else y))

    def norm(x):
        return float(np.sqrt(max(dot(x, x), 0.0)))

    x = np.zeros(N) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    report = SolveReport(converged=False, iterations=0)
    if bnorm == 0.0:
        report.converged = True
        report.final_x = np.zeros(N)
        report.residual_history.append(0.0)
        return report

    r = b - apply_A(x)
    rel = float(np.linalg.norm(r)) / bnorm
    report.residual_history.append(rel)
    if W is not None:
        report.weighted_history.append(norm(r))
    if rel <= config.tol:
        report.converged = True
        report.final_x = x
        report.wall_time = time.perf_counter() - t0
        return report

    k = config.restart
    it = 0
    while it < config.maxit:
        beta = norm(r)
        V = np.zeros((k + 1, N))
        Z = np.zeros((k, N))
        H = np.zeros((k + 1, k))
        cs = np.zeros(k)
        sn = np.zeros(k)
        g = np.zeros(k + 1)
        g[0] = beta
        V[0] = r / beta
        x_cycle = x
        done = False
        j_used = 0
        for j in range(k):
            Z[j] = P(V[j])
            w = apply_A(Z[j])
            w_norm0 = norm(w)
            for _ in range(2):
                for i in range(j + 1):
                    hij = dot(V[i], w)
                    H[i, j] += hij
                    w = w - hij * V[i]
                w_norm = norm(w)
                if w_norm > _REORTH * w_norm0:
                    break
                w_norm0 = w_norm
            H[j + 1, j] = w_norm
            breakdown = w_norm <= 1e-14 * max(abs(H[: j + 1, j]).max(), 1e-300)
            if not breakdown:
                V[j + 1] = w / w_norm
            # apply previous rotations, then build a new one
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            it += 1
            j_used = j + 1
            y = np.linalg.solve(np.triu(H[: j + 1, : j + 1]), g[: j + 1])
            x = x_cycle + Z[: j + 1].T @ y
            r = b - apply_A(x)
            rel = float(np.linalg.norm(r)) / bnorm
            if config.record_history:
                report.residual_history.append(rel)
                report.estimate_history.append(abs(g[j + 1]) / (norm(b) if W is not None else bnorm))
                if W is not None:
                    report.weighted_history.append(norm(r))
            if rel <= config.tol:
                done = True
                break
            if breakdown or it >= config.maxit:
                break
        # on breakdown V[j_used] was never filled
        Vc = V[: j_used + (0 if breakdown else 1)]
        gram = Vc @ (np.stack([W(v) for v in Vc]).T if W is not None else Vc.T)
        report.orthogonality_loss.append(float(abs(gram - np.eye(Vc.shape[0])).max()))
        if done:
            report.converged = True
            break
        report.restarts += 1

    if not config.record_history:
        report.residual_history.append(rel)
    report.iterations = it
    report.final_x = x
    report.wall_time = time.perf_counter() - t0
    return report
