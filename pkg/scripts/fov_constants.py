"""H-weighted norm and field-of-values constants of the exact preconditioners."""
import argparse

from stokesdarcy.analysis import LinearMap, WeightH, check_battery, fov_constants, norm_equivalence_constants
from stokesdarcy.grid import GridSpec, build_grid
from stokesdarcy.precond import make_preconditioner
from stokesdarcy.system import PhysicalParams, assemble_coupled


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=float, nargs="+", default=[1e-2, 1e-1, 1.0])
    ap.add_argument("--n", type=int, nargs="+", default=[8, 16, 32], help="cells per unit length (h = 1/N)")
    a = ap.parse_args()
    for rec in check_battery():
        print(rec.to_text())
    for k in a.k:
        params = PhysicalParams.isotropic(k=k)
        for N in a.n:
            sys = assemble_coupled(build_grid(GridSpec.uniform(1 / N)), params, None, "BJS")
            H = WeightH.build(sys)
            P = make_preconditioner(sys, "tri", "exact", dense_schur=True)
            fov = fov_constants(sys, P, H)
            ne = norm_equivalence_constants(H.as_map(), LinearMap.from_preconditioner(P), H)
            print(f"k={k:g} h=1/{N}: FOV gamma {fov.gamma:.4f} Gamma {fov.Gamma:.4f}; "
                  f"norm(H, P_tri) {ne.gamma:.4f} .. {ne.Gamma:.4f}")


if __name__ == "__main__":
    main()
