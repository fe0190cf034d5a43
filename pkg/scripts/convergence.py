"""MMS error table and observed orders for both interface conditions."""
import argparse

from stokesdarcy.bench import convergence_study, observed_orders
from stokesdarcy.system import PhysicalParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=4, help="grids 1/10, 1/20, ...")
    a = ap.parse_args()
    hs = [1 / (10 * 2**i) for i in range(a.levels)]
    for cond in ("BJ", "BJS"):
        rows = convergence_study(cond, PhysicalParams.isotropic(), hs)
        orders = observed_orders(rows)
        print(f"{cond}\n{'h':>8s} {'u':>10s} {'v':>10s} {'p_ff':>10s} {'p_pm':>10s}")
        for i, r in enumerate(rows):
            print(f"{r.h:8.5f} " + " ".join(f"{e:10.3e}" for e in r.as_tuple()))
            if i:
                print(" " * 9 + " ".join(f"{o:10.2f}" for o in orders[i - 1]))


if __name__ == "__main__":
    main()
