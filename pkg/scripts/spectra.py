"""Eigenvalues of A P^{-1} for the exact preconditioners, with cluster fractions."""
import argparse

import numpy as np

from stokesdarcy.analysis import spectrum_preconditioned
from stokesdarcy.bench import benchmark_system
from stokesdarcy.precond import make_preconditioner
from stokesdarcy.system import PhysicalParams

CENTRES = {"diag": [0.5, 1.0], "tri": [1.0], "con": [1.0]}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=1 / 40)
    ap.add_argument("--prefix", default="spectrum")
    a = ap.parse_args()
    params = PhysicalParams.isotropic()
    for cond in ("BJ", "BJS"):
        sys = benchmark_system(a.h, cond, params)
        for kind in ("diag", "tri", "con"):
            kw = {} if kind == "con" else {"dense_schur": True}
            spec = spectrum_preconditioned(sys, make_preconditioner(sys, kind, "exact", **kw))
            lam = spec.values
            np.savetxt(f"{a.prefix}_{cond}_{kind}.csv", np.c_[lam.real, lam.imag], delimiter=",",
                       header="re,im", comments="")
            print(f"{cond:4s} {kind:5s} n={len(lam)} near {CENTRES[kind]}: "
                  f"{spec.fraction_near(CENTRES[kind], 0.05):.1%}, min |lambda| {spec.min_modulus():.3f}")


if __name__ == "__main__":
    main()
