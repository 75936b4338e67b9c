#!/usr/bin/env python3
"""Check the qualitative capacity-sweep trends on a sweep CSV: transit share
grows as road capacity shrinks, adding transit never raises the objective,
and the road-only system is never faster on average."""
import argparse
import csv
import sys
from collections import defaultdict


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("csv", help="output of run_sweep.py or `iamod sweep` (.csv)")
    p.add_argument("--eps", type=float, default=1e-9, help="relative slack for comparisons")
    args = p.parse_args()

    rows = defaultdict(dict)
    with open(args.csv, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows[r["variant"]][float(r["fraction"])] = r
    fractions = sorted(rows["iamod"], reverse=True)
    ia, am = rows["iamod"], rows["amod"]
    eps = args.eps

    share = [float(ia[f]["share_transit"]) for f in fractions]
    checks = {
        "transit share non-decreasing as capacity falls":
            all(b >= a - eps for a, b in zip(share, share[1:])),
        "I-AMoD objective <= AMoD-only objective":
            all(float(ia[f]["objective"]) <= float(am[f]["objective"]) * (1 + eps) for f in fractions),
        "AMoD-only travel time >= I-AMoD travel time":
            all(float(am[f]["avg_travel_time_s"]) >= float(ia[f]["avg_travel_time_s"]) * (1 - eps)
                for f in fractions),
    }
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
