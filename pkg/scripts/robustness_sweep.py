"""Parameter sweep over mu, k, alpha at h = 1/80 with spread summary.

Reads an optional key = value config (same format as ``stokesdarcy sweep``).
"""
import argparse
import sys

from stokesdarcy.bench import SweepSpec, iteration_spread, robustness_sweep, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?")
    ap.add_argument("--output", default="robustness.csv")
    a = ap.parse_args()
    spec = SweepSpec.load(a.config) if a.config else SweepSpec()
    recs = robustness_sweep(spec, on_record=lambda r: print(
        f"{r.condition} {r.precond} k={r.k:g} mu={r.mu:g} alpha={r.alpha:g}: {r.iterations}", file=sys.stderr))
    write_csv(a.output, recs)
    for (cond, kind, mode, k), v in sorted(iteration_spread(recs).items()):
        print(f"{cond:4s} {kind:5s} {mode:8s} k={k:<6g} spread {v:.2f}")


if __name__ == "__main__":
    main()
