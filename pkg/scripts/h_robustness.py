"""Inexact preconditioner iterations over h = 1/10 ... 1/160 (or 1/640)."""
import argparse
from collections import defaultdict

from stokesdarcy.bench import H_TABLE, h_robustness_table, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=5, help="how many grids from 1/10 upward (max 7)")
    ap.add_argument("--output")
    a = ap.parse_args()
    recs = h_robustness_table(hs=H_TABLE[: a.levels])
    if a.output:
        write_csv(a.output, recs)
    table = defaultdict(list)
    for r in recs:
        table[(r.condition, r.precond)].append(r.iterations)
    print("condition precond " + " ".join(f"1/{round(1 / h):<4d}" for h in H_TABLE[: a.levels]) + " max/min")
    for (cond, kind), its in table.items():
        print(f"{cond:9s} {kind:7s} " + " ".join(f"{i:6d}" for i in its) + f"  {max(its) / min(its):.2f}")


if __name__ == "__main__":
    main()
