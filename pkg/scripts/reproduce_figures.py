"""Run the CLI presets that produce plot-ready data for each figure.

Each target writes ``OUTDIR/<target>.csv`` plus its manifest; rerun a single
target with ``--only``.

    python scripts/reproduce_figures.py --outdir figures --only integral hellmann
"""

from __future__ import annotations

import argparse
import pathlib
import time

from specmeasure.cli import main as cli

TARGETS = {
    "integral": ["int-meas", "--preset", "gaussian", "--epsilon", "0.1", "--order", "1"],
    "schrodinger": ["diff-meas", "--preset", "schrodinger", "--epsilon", "0.1", "--order", "1"],
    "beam": ["diff-meas", "--preset", "beam", "--epsilon", "0.05", "--order", "2"],
    "hellmann": ["rse-meas", "--preset", "hellmann", "--epsilon", "0.1", "--order", "4",
                 "--prob-interval", "0.5", "2"],
    "jacobi": ["infmat-meas", "--preset", "jacobi", "--epsilon", "0.05", "--order", "2"],
    "graphene": ["infmat-meas", "--preset", "graphene", "--epsilon", "0.05", "--order", "2"],
    "dirac": ["dirac-eigs", "--preset", "coulomb"],
    "convergence": ["convergence", "--preset", "multiplication"],
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", default="figures")
    p.add_argument("--only", nargs="+", choices=sorted(TARGETS))
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    status = 0
    for name in args.only or TARGETS:
        t0 = time.perf_counter()
        code = cli([*TARGETS[name], "--threads", str(args.threads), "--out", str(outdir / f"{name}.csv")])
        print(f"{name}: exit {code}, {time.perf_counter() - t0:.1f} s", flush=True)
        status = max(status, code)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
