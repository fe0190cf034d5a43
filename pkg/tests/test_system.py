import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from stokesdarcy.grid import GridSpec, build_grid, interface_columns
from stokesdarcy.mms import MmsSolution, mms_sources
from stokesdarcy.system import (
    AssemblyError,
    PhysicalParams,
    SourceFields,
    assemble_coupled,
    postprocess_darcy_velocity,
    zero_sources,
)

from conftest import BENCH, coupled

MU = 1e-3


def _row(sys, g):
    return sys.matrix.getrow(g).toarray().ravel()


def _field(sys, u, v, p=None, q=None):
    c = sys.grid.unknown_coords()
    z = lambda x, y: 0.0 * x
    p, q = p or z, q or z
    return np.concatenate([u(*c["u"]), v(*c["v"]), p(*c["pff"]), q(*c["ppm"]), q(*c["ppm_if"])])


# ---------------------------------------------------------------- interior


@pytest.mark.parametrize("coef", [(1, 0, 0, 0, 0, 0), (0, 0, 1, 0, 0, 0), (0.3, -1.2, 0.7, 2.0, 0.5, -0.4)])
def test_interior_momentum_against_flux_balance(coef):
    """Second-order central fluxes are exact on quadratics, so the interior
    rows must return -div(mu (grad v + grad v^T)) times the cell area."""
    a, b, c, d, e, f = coef
    sys = coupled(1 / 16)
    g = sys.grid
    x = _field(sys, lambda X, Y: a * X**2 + b * X * Y + c * Y**2, lambda X, Y: d * X**2 + e * X * Y + f * Y**2)
    y = sys.matrix @ x
    area = g.hx * g.hy
    dofs = g.dofs
    rows_u = dofs.u[2:-2, 2:-2].ravel()
    rows_v = dofs.v[2:-2, 2:-2].ravel()
    assert np.allclose(y[rows_u], -MU * (4 * a + 2 * c + e) * area, atol=1e-14)
    assert np.allclose(y[rows_v], -MU * (2 * d + 4 * f + b) * area, atol=1e-14)


def test_interior_u_diagonal():
    sys = coupled(1 / 8)
    g = sys.grid
    row = int(g.dofs.u[2, 3])
    # Laplacian part 2 mu (hy/hx + hx/hy) plus the transposed-gradient 2 mu hy/hx
    assert sys.A[row, row] == pytest.approx(2 * MU * 2 + 2 * MU, rel=1e-14)


def test_pressure_gradient_rows():
    sys = coupled(1 / 8)
    x = _field(sys, lambda X, Y: 0 * X, lambda X, Y: 0 * X, p=lambda X, Y: 2 * X - 3 * Y)
    y = sys.matrix @ x
    d = sys.grid.dofs
    h = sys.grid.hx
    assert np.allclose(y[d.u[2:-1, 1:-1].ravel()], 2 * h * h)
    assert np.allclose(y[d.v[1:-1].ravel()], -3 * h * h)


def test_divergence_of_constant_velocity():
    sys = coupled(1 / 8)
    n_u = sys.grid.dofs.n_u
    # a constant field lives on the interior unknowns only; the boundary data
    # must come from the right-hand side, so check the row sums directly
    Bu, Bv = sys.B[:, :n_u], sys.B[:, n_u:]
    cells = sys.grid.dofs.pff[1:-1, 1:-1].ravel() - sys.n
    assert np.allclose(np.asarray(Bu.sum(axis=1)).ravel()[cells], 0)
    assert np.allclose(np.asarray(Bv.sum(axis=1)).ravel()[cells], 0)


def test_zero_sources_zero_rhs():
    for cond in ("BJ", "BJS"):
        assert not np.any(coupled(1 / 8, cond).rhs)


def test_darcy_interior_diagonal_and_symmetry():
    sys = coupled(1 / 8)
    r = int(sys.grid.dofs.ppm[1, 3]) - sys.n - sys.m
    assert sys.D[r, r] == pytest.approx(2 * 1e-2 / MU * 2, rel=1e-14)
    assert abs(sys.D - sys.D.T).max() == 0


def test_constant_porous_pressure_residual():
    params = BENCH
    src = SourceFields(
        f_ff=lambda x, y: (0 * x, 0 * x), f_pm=lambda x, y: 0 * x,
        vbar=lambda x, y: (0 * x, 0 * x), pbar=lambda x, y: 0 * x + 1.7,
    )
    sys = assemble_coupled(build_grid(GridSpec.uniform(1 / 8)), params, src, "BJS")
    x = _field(sys, lambda X, Y: 0 * X, lambda X, Y: 0 * X, q=lambda X, Y: 0 * X + 1.7)
    res = sys.residual(x)
    cells = sys.grid.dofs.ppm[:-1].ravel()  # the top row couples to the interface mass row
    assert np.allclose(res[cells], 0, atol=1e-12)
    assert np.allclose(res[sys.grid.dofs.ppm_if], 0, atol=1e-12)


# --------------------------------------------------------------- interface


def test_interface_mass_coefficients():
    sys = coupled(1 / 8)
    for col in interface_columns(sys.grid):
        r = _row(sys, col.ppm_P)
        assert r[col.v_P] == pytest.approx(-0.125)
        # the row reads C v - D p: D[P, s] = -20, D[P, P] = +20
        assert r[col.ppm_s] == pytest.approx(20.0)
        assert r[col.ppm_P] == pytest.approx(-20.0)
        assert np.count_nonzero(r) == 3


def test_interface_normal_force_row():
    sys = coupled(1 / 8)
    col = interface_columns(sys.grid)[3]
    r = _row(sys, col.v_P)
    assert r[col.v_P] == pytest.approx(3e-3)
    assert r[col.v_N] == pytest.approx(-2e-3)
    assert r[col.v_W] == r[col.v_E] == pytest.approx(-0.5e-3)
    assert [r[col.u_nw], r[col.u_ne], r[col.u_w], r[col.u_e]] == pytest.approx([1e-3, -1e-3, -1e-3, 1e-3])
    assert r[col.pff_n] == pytest.approx(0.125)
    assert r[col.ppm_P] == pytest.approx(-0.125)
    assert sys.rhs[col.v_P] == 0


@pytest.mark.parametrize("cond", ["BJ", "BJS"])
def test_interface_tangential_row(cond):
    sys = coupled(1 / 8, cond)
    d = sys.grid.dofs
    i = 3
    r = _row(sys, d.u[0, i])
    assert r[d.u[0, i]] == pytest.approx(3.25e-3)
    assert r[d.u[1, i]] == pytest.approx(-2e-3)
    assert r[d.v[0, i - 1]] == pytest.approx(1e-3)
    assert r[d.v[0, i]] == pytest.approx(-1e-3)
    w, e = d.ppm_if[i - 1], d.ppm_if[i]
    if cond == "BJ":
        assert (r[w], r[e]) == pytest.approx((-0.1, 0.1))
        assert np.count_nonzero(r) == 6
    else:
        assert r[w] == r[e] == 0
        assert np.count_nonzero(r) == 4


def test_bj_pressure_coefficient_is_h_independent():
    for h in (1 / 8, 1 / 16):
        sys = coupled(h, "BJ")
        d = sys.grid.dofs
        assert sys.matrix[d.u[0, 2], d.ppm_if[2]] == pytest.approx(0.1)


def test_bjs_symmetric():
    for params in (BENCH, PhysicalParams(mu=0.3, kxx=2e-3, kyy=5e-2, alpha=7.0)):
        sys = coupled(1 / 8, "BJS", params=params)
        assert abs(sys.matrix - sys.matrix.T).max() == 0
        assert (sys.C1 != sys.C2).nnz == 0


def test_bj_asymmetry_pattern():
    sys = coupled(1 / 8, "BJ")
    d = sys.grid.dofs
    E = sp.coo_matrix(sys.matrix - sys.matrix.T)
    E.eliminate_zeros()
    u_if = set(d.u[0][d.u[0] >= 0].tolist())
    p_if = set(d.ppm_if.tolist())
    for r, c in zip(E.row, E.col):
        assert (r in u_if and c in p_if) or (r in p_if and c in u_if)
    assert E.nnz == 4 * (sys.grid.nx - 1)


def test_bj_with_coupling_removed_is_bjs():
    bj, bjs = coupled(1 / 8, "BJ"), coupled(1 / 8, "BJS")
    d = bj.grid.dofs
    M = bj.matrix.tolil()
    for g in d.u[0][d.u[0] >= 0]:
        for p in d.ppm_if:
            M[g, p] = 0
    assert abs(M.tocsr() - bjs.matrix).max() == 0


@pytest.mark.parametrize("cond", ["BJ", "BJS"])
def test_block_invariants_verified(cond):
    grid = build_grid(GridSpec.uniform(1 / 8), uniform=True)
    sys = assemble_coupled(grid, BENCH, None, cond, verify=True)
    assert sys.n + sys.m + sys.l == sys.size
    assert np.linalg.eigvalsh(sys.A.toarray()).min() > 0


@given(
    st.floats(1e-4, 1.0), st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(0.1, 10.0)
)
def test_blocks_spd_random_params(mu, kxx, kyy, alpha):
    p = PhysicalParams(mu=mu, kxx=kxx, kyy=kyy, alpha=alpha)
    assemble_coupled(build_grid(GridSpec.uniform(1 / 4)), p, None, "BJ", verify=True)


def test_rank_deficiency_detected():
    sys = coupled(1 / 4)
    M = sys.matrix.tolil()
    r0, r1 = sys.n, sys.n + 1
    M[r1, : sys.n] = M[r0, : sys.n]
    M[: sys.n, r1] = M[: sys.n, r0]
    bad = sys.with_matrix(M.tocsr())
    from stokesdarcy.system import _verify_blocks

    with pytest.raises(AssemblyError):
        _verify_blocks(bad)


def test_bad_params_and_condition():
    with pytest.raises(ValueError):
        PhysicalParams(kyy=0.0)
    with pytest.raises(ValueError):
        assemble_coupled(build_grid(GridSpec.uniform(1 / 4)), BENCH, None, "Darcy")


# ------------------------------------------------------------- MMS residual


def test_mms_interior_residual_second_order():
    s0 = MmsSolution()
    errs = []
    for h in (1 / 20, 1 / 40, 1 / 80):
        sys = coupled(h, "BJS", mms=True)
        r = sys.residual(_field(sys, s0.u, s0.v, s0.p_ff, s0.p_pm)) / (h * h)
        q = int(round(0.1 / h))
        row = []
        for kind in ("u", "v", "ppm"):
            a = getattr(sys.grid.dofs, kind)[q:-q, q:-q]
            row.append(abs(r[a[a >= 0]]).max())
        errs.append(row)
    e = np.array(errs)
    orders = np.log2(e[:-1] / e[1:])
    assert orders.min() >= 1.8, orders


# --------------------------------------------------------- Darcy velocity


def test_darcy_velocity_constant_and_linear():
    g = build_grid(GridSpec.uniform(1 / 8))
    nx, nyp = g.nx, g.ny_pm
    p = np.full(nx * nyp + nx, 2.5)
    out = postprocess_darcy_velocity(g, BENCH, p, pbar=lambda x, y: 2.5)
    assert np.allclose(out["u"][2], 0) and np.allclose(out["v"][2], 0)
    c = g.unknown_coords()
    p = np.concatenate([c["ppm"][0], c["ppm_if"][0]])
    out = postprocess_darcy_velocity(g, BENCH, p, pbar=lambda x, y: x)
    assert np.allclose(out["u"][2], -1e-2 / MU)
    assert np.allclose(out["v"][2], 0)


def test_darcy_velocity_mms_second_order():
    s0 = MmsSolution()
    errs = []
    for h in (1 / 20, 1 / 40, 1 / 80):
        g = build_grid(GridSpec.uniform(h))
        c = g.unknown_coords()
        p = np.concatenate([s0.p_pm(*c["ppm"]), s0.p_pm(*c["ppm_if"])])
        out = postprocess_darcy_velocity(g, BENCH, p, pbar=s0.p_pm)
        x, y, val = out["u"]
        inner = (x > 0) & (x < 1)  # wall faces use a one-sided half-cell gradient
        errs.append(abs(val - s0.darcy_velocity(BENCH, x, y)[0])[inner].max())
        # p_pm is quadratic in y, so centred vertical gradients are exact
        x, y, val = out["v"]
        inner = (y > -0.5) & (y < 0)
        assert np.allclose(val[inner], s0.darcy_velocity(BENCH, x, y)[1][inner], atol=1e-11)
    e = np.array(errs)
    assert np.log2(e[:-1] / e[1:]).min() >= 1.8
