"""Smoothed density of graphene H_0 with respect to e_1 for a few flux values.

Writes a CSV (columns flux, x, density, converged) and prints the wall time
of each row together with the largest gap between the rows for flux and
1 - flux when both are present.

    python scripts/graphene_rows.py --flux 0.25 0.75 --points 200 --out rows.csv
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from specmeasure.core import AdaptiveConfig
from specmeasure.kernel import make_kernel
from specmeasure.lattice import ButterflyTable, butterfly_sweep


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--flux", type=float, nargs="+", default=[0.25, 0.75])
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--radius", type=int, default=200)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--out", default="graphene_rows.csv")
    args = p.parse_args(argv)

    xs = np.linspace(-3.1, 3.1, args.points)
    cfg = AdaptiveConfig(rel_tol=args.rel_tol, disc_max=2**18)
    kernel = make_kernel(args.order)
    rows = {}
    tables = []
    for phi in args.flux:
        t0 = time.perf_counter()
        table = butterfly_sweep([phi], xs, args.epsilon, kernel, cfg, radius=args.radius)
        print(f"flux={phi}: {time.perf_counter() - t0:.1f} s, "
              f"converged {int(table.converged.sum())}/{xs.size}", flush=True)
        rows[phi] = table.density[0]
        tables.append(table)
    merged = ButterflyTable(np.array(args.flux), xs, np.vstack([t.density for t in tables]),
                            np.vstack([t.converged for t in tables]), args.epsilon, args.order)
    merged.to_csv(args.out)
    for phi in args.flux:
        if phi < 0.5 and (1 - phi) in rows:
            gap = np.max(np.abs(rows[phi] - rows[1 - phi]))
            print(f"max |row({phi}) - row({1 - phi})| = {gap:.3e}")


if __name__ == "__main__":
    main()
