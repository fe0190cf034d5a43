import json

import numpy as np
import pytest
import scipy.linalg as sla

from stokesdarcy.analysis import (
    GAMMA_TRI,
    MBAR_VALUES,
    CheckRecord,
    EquivalenceReport,
    LinearMap,
    WeightH,
    dense_sqrt,
    fov_constants,
    lemma_norm,
    mbar_eigencheck,
    mbar_matrix,
    norm_equivalence_constants,
    pcon_quadratic_residuals,
    residual_bound_check,
    solve_weighted,
    spectrum_preconditioned,
    weighted_operator_norm,
)
from stokesdarcy.krylov import SolverConfig
from stokesdarcy.precond import make_pcon, make_preconditioner

from conftest import coupled

GOLDEN = (1 + np.sqrt(5)) / 2


def decoupled(h):
    """Benchmark system with the interface coupling blocks removed."""
    sys = coupled(h)
    n, m = sys.n, sys.m
    M = sys.matrix.tolil()
    M[n + m :, :n] = 0
    M[:n, n + m :] = 0
    return sys.with_matrix(M.tocsr())


def exact(sys, kind):
    kw = {} if kind == "con" else {"dense_schur": True}
    return make_preconditioner(sys, kind, "exact", **kw)


def test_constants():
    assert MBAR_VALUES == pytest.approx([0.381966, 1, 2, 2.618034], abs=1e-6)
    assert GAMMA_TRI == pytest.approx(GOLDEN, rel=1e-15)


def test_weight_inner_product(rng):
    sys = coupled(1 / 4)
    H = WeightH.build(sys)
    x, y = rng.standard_normal((2, sys.size))
    assert H.inner(x, y) == pytest.approx(H.inner(y, x), rel=1e-10)
    assert H.inner(x, x) > 0
    assert H.inner(x, y) == pytest.approx(x @ np.linalg.solve(H.dense(), y), rel=1e-9)
    assert np.allclose(H.apply(H.solve(x)), x)
    with pytest.raises(ValueError):
        WeightH.build(sys, rho=0.0)


def test_weighted_norm_against_dense_square_roots():
    """||H^{-1/2} T H^{1/2}||_2 through factorized solves vs explicit roots."""
    sys = coupled(1 / 8)
    H = WeightH.build(sys)
    P = LinearMap.from_preconditioner(exact(sys, "tri"))
    A = sys.matrix
    W = H.inverse_weight()
    est = weighted_operator_norm(lambda x: A @ P.solve(x), lambda x: P.solve_T(A.T @ x), sys.size, W, W, tol=1e-13)
    Hd = H.dense()
    T = A.toarray() @ P.dense_inverse()
    ref = np.linalg.norm(dense_sqrt(Hd, -0.5) @ T @ dense_sqrt(Hd, 0.5), 2)
    assert est == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("h", [1 / 4, 1 / 8])
def test_lemma_norm_dense_cross_check(h):
    sys = coupled(h)
    val = lemma_norm(sys)
    A, B = sys.A.toarray(), sys.B.toarray()
    S = B @ np.linalg.solve(A, B.T)
    ref = np.linalg.norm(dense_sqrt(S, -0.5) @ B @ dense_sqrt(A, -0.5), 2)
    assert val == pytest.approx(1.0, abs=1e-6)
    assert val == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("kind,bound", [("diag", 1.0), ("tri", GAMMA_TRI)])
def test_norm_equivalence_two_routes(kind, bound):
    sys = coupled(1 / 8)
    H = WeightH.build(sys)
    N = LinearMap.from_preconditioner(exact(sys, kind))
    power = norm_equivalence_constants(H.as_map(), N, H)
    dense = norm_equivalence_constants(H.as_map(), N, H, method="dense")
    assert power.gamma == pytest.approx(dense.gamma, rel=1e-8)
    assert power.Gamma == pytest.approx(dense.Gamma, rel=1e-8)
    assert power.Gamma <= bound + 1e-6
    assert not power.uncertain


def test_norm_equivalence_identical_operators():
    sys = coupled(1 / 4)
    H = WeightH.build(sys)
    M = LinearMap.from_sparse(sys.matrix)
    rep = norm_equivalence_constants(M, M, H)
    assert rep.gamma == pytest.approx(1.0) and rep.Gamma == pytest.approx(1.0)
    with pytest.raises(ValueError):
        norm_equivalence_constants(M, M, H, method="sample")


def test_fov_of_perfect_preconditioner():
    sys = coupled(1 / 8, "BJ")
    rep = fov_constants(sys, LinearMap.from_sparse(sys.matrix), WeightH.build(sys))
    assert rep.gamma == pytest.approx(1.0, abs=1e-10) and rep.Gamma == pytest.approx(1.0, abs=1e-8)


def test_fov_ptri_without_coupling():
    # with C = 0 the symmetrised form reduces to the two-by-two saddle case:
    # the lower constant is exactly 1/2 and the upper one the golden ratio
    sys = decoupled(1 / 8)
    rep = fov_constants(sys, exact(sys, "tri"), WeightH.build(sys))
    assert rep.gamma == pytest.approx(0.5, abs=1e-10)
    assert rep.Gamma == pytest.approx(GOLDEN, rel=1e-8)


def test_fov_ptri_with_coupling_measured():
    # the coupled benchmark pushes gamma below zero at k = 1e-2; a larger
    # permeability shrinks the coupling and gamma turns positive
    sys = coupled(1 / 8)
    low = fov_constants(sys, exact(sys, "tri"), WeightH.build(sys))
    assert low.gamma < 0
    from stokesdarcy.system import PhysicalParams

    sys1 = coupled(1 / 8, params=PhysicalParams.isotropic(k=1.0))
    high = fov_constants(sys1, exact(sys1, "tri"), WeightH.build(sys1))
    assert 0.4 < high.gamma < 0.5


def test_spectrum_with_system_as_preconditioner():
    sys = coupled(1 / 4, "BJ")
    lu = sla.lu_factor(sys.matrix.toarray())
    lam = spectrum_preconditioned(sys, lambda r: sla.lu_solve(lu, r)).values
    assert np.allclose(lam, 1.0, atol=1e-10)


def test_spectrum_cap():
    sys = coupled(1 / 8)
    with pytest.raises(ValueError, match="coarser grid"):
        spectrum_preconditioned(sys, exact(sys, "diag"), cap=50)


def test_pdiag_unit_eigenvectors():
    # (x; 0; 0) with B x = 0 and C x = 0 is an eigenvector for lambda = 1
    sys = coupled(1 / 4)
    K = sla.null_space(np.vstack([sys.B.toarray(), sys.C1.toarray()]))
    assert K.shape[1] > 0
    P = exact(sys, "diag")
    for x in K.T[:3]:
        w = np.concatenate([sys.A @ x, np.zeros(sys.m + sys.l)])
        assert np.allclose(sys.matrix @ P(w), w, atol=1e-10 * np.abs(w).max())


def test_pdiag_three_point_spectrum_without_coupling():
    # eigenvalues of A P_diag^{-1} with C = 0 are 1 and (1 +- i sqrt 3) / 2
    sys = decoupled(1 / 8)
    lam = spectrum_preconditioned(sys, exact(sys, "diag")).values
    targets = [1.0, (1 + 1j * np.sqrt(3)) / 2, (1 - 1j * np.sqrt(3)) / 2]
    d = np.min(np.abs(lam[:, None] - np.array(targets)[None, :]), axis=1)
    assert d.max() < 1e-6


@pytest.mark.parametrize("h", [1 / 8])
def test_pcon_quadratic(h):
    sys = coupled(h)
    lam, res, ex = pcon_quadratic_residuals(sys, make_pcon(sys, "exact"))
    tested = ~np.isnan(res)
    assert tested.sum() > 0
    assert np.nanmax(res) <= 1e-6
    assert np.all(ex[tested, 0] > 0) and np.all(ex[tested, 1] >= -1e-12)
    with pytest.raises(ValueError):
        pcon_quadratic_residuals(sys, exact(sys, "tri"))


@pytest.mark.parametrize("h", [1 / 4, 1 / 8])
def test_mbar_membership(h):
    sys = coupled(h)
    rec = mbar_eigencheck(sys)
    assert rec.passed and rec.value <= 1e-6
    lam = np.linalg.eigvals(mbar_matrix(sys))
    # the smallest closed-form value is present
    assert np.min(np.abs(lam - MBAR_VALUES[0])) <= 1e-8


def test_residual_bound_perfect_preconditioner():
    sys = coupled(1 / 8)
    H = WeightH.build(sys)
    lu = sla.lu_factor(sys.matrix.toarray())
    rep = solve_weighted(sys, lambda r: sla.lu_solve(lu, r), H, SolverConfig(tol=1e-12))
    assert rep.iterations == 1
    assert residual_bound_check(rep, 1.0, 1.0, slack=1e-10) == [True]


def test_residual_bound_and_negative_control():
    sys = decoupled(1 / 8)
    H = WeightH.build(sys)
    P = exact(sys, "tri")
    rep = solve_weighted(sys, P, H)
    fov = fov_constants(sys, P, H)
    assert all(residual_bound_check(rep, fov.gamma, fov.Gamma, restart=20))
    inflated = residual_bound_check(rep, 0.999 * fov.Gamma, fov.Gamma, restart=20)
    assert not all(inflated)
    with pytest.raises(ValueError):
        residual_bound_check(type(rep)(converged=True, iterations=0), 0.5, 1.0)


def test_reports_and_records():
    rep = EquivalenceReport(0.5, 2.0, "FOV", [1, 2, 3], [(0.5, 2.0), (0.55, 2.0), (0.5, 1.9)])
    dg, dG = rep.drift()
    assert dg == pytest.approx(0.05 / 0.55) and dG == pytest.approx(0.05)
    with pytest.raises(ValueError):
        EquivalenceReport(0.5, 1.0, "Spectral")
    rec = CheckRecord("x", True, np.float64(1.0), 1.0, "note")
    assert json.loads(rec.to_text()) == {"name": "x", "passed": True, "value": 1.0, "threshold": 1.0, "detail": "note"}
