#!/usr/bin/env python3
"""Decay-rate order when the jump intensity vanishes on the boundary.

For intensity (x(1-x))^m on the unit interval with a uniform redistribution
density, fits lambda0(delta) ~ delta^alpha(m) and reports alpha with a
bootstrap CI per m.  Exploratory: the true scaling law here is an open
problem, so nothing is asserted; the table is the product.
"""
import argparse
import sys
from pathlib import Path

import jumplab as jl
from jumplab import experiments as ex


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", default="1,2,3", help="comma-separated vanishing orders")
    ap.add_argument("--delta", default=None,
                    help="comma-separated list (default harness sweep)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args(argv)
    ms = [int(t) for t in args.m.split(",")]
    deltas = [float(t) for t in args.delta.split(",")] if args.delta \
        else list(ex.DEFAULT_DELTAS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    results, summary = ex.run_probe_suite(lambda m: jl.preset(f"probe-Vm{m}"),
                                          ms=ms, deltas=deltas,
                                          workers=args.workers)
    print(f"{'m':>3} {'alpha':>9} {'CI low':>9} {'CI high':>9} {'excluded':>9}")
    for m in ms:
        fit = results[m].fit
        lo, hi = fit.exponent_ci
        print(f"{m:>3} {fit.exponent:>9.4f} {lo:>9.4f} {hi:>9.4f} {len(fit.excluded):>9}")
        ex.write_rows_csv(results[m].rows, out / f"probe-m{m}.csv")
    if "ordering_alpha1_lt_alpha3" in summary:
        print(f"alpha(1) < alpha(3): {summary['ordering_alpha1_lt_alpha3']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
