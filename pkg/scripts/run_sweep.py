#!/usr/bin/env python3
"""Road-capacity sweep on a generated grid city, written as CSV, JSON or a
gnuplot data file depending on the output extension."""
import argparse
import logging
import os
import sys
import time
from pathlib import Path

from iamod.generator import grid_scenario
from iamod.metrics import VARIANTS, sweep


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=5)
    p.add_argument("--requests", type=int, default=8)
    p.add_argument("--seed", type=int, default=0, help="demand seed")
    p.add_argument("--steps", type=int, default=11, help="fractions from 0.10 down to 0.0")
    p.add_argument("--jobs", type=int, default=min(4, os.cpu_count() or 1))
    p.add_argument("--no-verify", action="store_true")
    p.add_argument("--out", default="sweep.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    s = grid_scenario(args.rows, args.cols, demand_seed=args.seed, n_requests=args.requests)
    n = max(2, args.steps)
    fractions = [round(0.10 * (n - 1 - k) / (n - 1), 6) for k in range(n)]
    t0 = time.perf_counter()
    table = sweep(s, fractions, VARIANTS, jobs=args.jobs, verify=not args.no_verify)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    text = {".json": table.to_json, ".dat": table.to_gnuplot}.get(out.suffix, table.to_csv)()
    out.write_text(text, encoding="utf-8")
    print(f"{len(table.rows)} points in {elapsed:.1f}s -> {out}")
    for r in table.rows:
        m = r.metrics
        if m is None:
            print(f"  {r.fraction:5.3f} {r.variant:5s} {r.status}: {r.error}")
        else:
            print(f"  {r.fraction:5.3f} {r.variant:5s} cost {m.monetary_cost:9.2f} USD/h  "
                  f"time {m.avg_travel_time:6.1f} s  transit {m.share_transit:.3f}  "
                  f"toll {m.avg_toll_per_trip:.3f} USD  eq {r.equilibrium}")
    return 0 if all(r.status == "optimal" for r in table.rows) else 1


if __name__ == "__main__":
    sys.exit(main())
