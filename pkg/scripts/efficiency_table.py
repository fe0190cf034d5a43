"""Iteration counts and timings of all six preconditioners at h = 1/80."""
import argparse

from stokesdarcy.bench import efficiency_table, records_to_csv, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=1 / 80)
    ap.add_argument("--output", help="CSV path (stdout if omitted)")
    a = ap.parse_args()
    recs = efficiency_table(h=a.h)
    if a.output:
        write_csv(a.output, recs)
    print(records_to_csv(recs), end="")


if __name__ == "__main__":
    main()
