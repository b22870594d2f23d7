"""Command-line entry points.

Every command resolves a JSON configuration (preset plus overrides), runs it,
writes CSV output and a JSON run manifest next to it.  ``specmeasure replay``
re-runs a manifest.  Exit codes: 0 success, 2 configuration error, 3
numerical non-convergence (partial results are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .core import (
    _fmt,
    convergence_sweep,
    default_threads,
    eigen_scan,
    integrate_against,
    smoothed_measure,
    smoothed_measure_grid,
)
from .kernel import KernelError, make_kernel
from .ode import dirac_eigenvalue_oracle
from .presets import (
    PRESETS,
    ConfigError,
    adaptive_config,
    build_kernel,
    build_sampler,
    grid_points,
    load_config,
    locate_field,
    oracle_density,
    resolve_config,
)

__all__ = ["RunManifest", "main", "run_command", "EXIT_OK", "EXIT_CONFIG", "EXIT_NONCONVERGED"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

MEASURE_COMMANDS = ("diff-meas", "int-meas", "rse-meas", "infmat-meas")
COMMANDS = MEASURE_COMMANDS + ("dirac-eigs", "convergence")


@dataclass
class RunManifest:
    """Everything needed to reproduce one run.

    The thread count is deliberately absent: results are merged in index
    order, so it never changes the output.
    """

    command: str
    config: dict
    version: str = __version__
    diagnostics: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        rec = json.loads(text)
        missing = {"command", "config"} - set(rec)
        if missing:
            raise ConfigError(f"manifest lacks field(s) {sorted(missing)}")
        return cls(**{k: rec[k] for k in ("command", "config", "version", "diagnostics", "results", "outputs")
                      if k in rec})


@dataclass
class RunResult:
    manifest: RunManifest
    exit_code: int
    files: dict  # path -> text


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _grid_summary(grid) -> dict:
    sizes = grid.max_sizes
    return {"points": len(grid.points), "converged": int(sum(grid.converged)),
            "max_N": int(max(sizes)), "min_N": int(min(sizes))}


def _run_measure(command: str, cfg: dict, out: str, threads: int) -> RunResult:
    sampler = build_sampler(command, cfg)
    kernel = build_kernel(cfg)
    acfg = adaptive_config(cfg)
    grid = smoothed_measure_grid(sampler, kernel, grid_points(cfg), cfg["epsilon"], acfg, threads=threads)
    files = {out: grid.to_csv()}
    manifest = RunManifest(command, cfg, diagnostics=_grid_summary(grid))
    ok = grid.all_converged
    if cfg.get("prob_interval") is not None:
        a, b = cfg["prob_interval"]
        q = int(cfg.get("quad_order", 20))
        prob = integrate_against(sampler, kernel, (a, b), cfg["epsilon"], q, acfg, threads=threads)
        manifest.results["probability"] = _fmt(prob)
        manifest.results["interval"] = [_fmt(a), _fmt(b)]
    return RunResult(manifest, EXIT_OK if ok else EXIT_NONCONVERGED, files)


def dirac_scan_points(lower: float, upper_gap: float, step: float) -> np.ndarray:
    """Scan grid uniform in ``u = (1 - x)^(-1/2)``.

    Eigenvalues below the threshold 1 accumulate like ``1 - c / n^2``, so they
    are roughly equispaced in ``u``; a fixed ``u`` step resolves all of them
    up to ``1 - upper_gap``.
    """
    u = np.arange(1 / math.sqrt(1 - lower), 1 / math.sqrt(upper_gap), step)
    return 1 - u**-2


def _run_dirac(cfg: dict, out: str, threads: int) -> RunResult:
    p = cfg["params"]
    count = int(p["count"])
    header = ["j", "computed", "analytic", "abs_error", "weight"]
    rows = []
    found = []
    if count > 0:
        sampler = build_sampler("dirac-eigs", cfg)
        pts = dirac_scan_points(float(p["lower"]), float(p["upper_gap"]), float(p["step"]))
        found = eigen_scan(sampler, (float(pts[0]), float(pts[-1])), cfg["epsilon"], cfg=adaptive_config(cfg),
                           noise_floor=0.0, points=pts)
        for j, est in enumerate(found[:count]):
            exact = dirac_eigenvalue_oracle(p["gamma"], j) if int(p["kappa"]) == -1 else math.nan
            rows.append([j, _fmt(est.location), _fmt(exact), _fmt(abs(est.location - exact)),
                         _fmt(est.projection_weight)])
    manifest = RunManifest("dirac-eigs", cfg, diagnostics={"requested": count, "found": len(found)})
    code = EXIT_OK if len(rows) == count else EXIT_NONCONVERGED
    return RunResult(manifest, code, {out: _csv(header, rows)})


def _run_convergence(cfg: dict, out: str, threads: int) -> RunResult:
    p = cfg["params"]
    sampler, reference = oracle_density(cfg["preset"], p)
    acfg = adaptive_config(cfg)
    x0 = float(p["x0"])
    source = "oracle"
    ok = True
    if reference is None:
        ref = p["reference"]
        try:
            reference, samples = smoothed_measure(sampler, make_kernel(int(ref["order"])), x0,
                                                  float(ref["epsilon"]), acfg, strict=False)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"params.reference: {exc}") from None
        ok = all(s.converged for s in samples)
        source = f"self-reference eps={ref['epsilon']} m={ref['order']}"
    table = convergence_sweep(sampler, p["orders"], p["epsilons"], x0, reference, acfg)
    manifest = RunManifest("convergence", cfg, diagnostics={"reference": _fmt(reference), "source": source})
    manifest.results["slopes"] = {str(m): _fmt(s) for m, s in table.slopes.items()}
    return RunResult(manifest, EXIT_OK if ok else EXIT_NONCONVERGED, {out: table.to_csv()})


def run_command(command: str, cfg: dict, out: str, threads: int = 1) -> RunResult:
    """Run a resolved configuration; BLAS is pinned to one thread for reproducibility."""
    with threadpool_limits(limits=1):
        try:
            if command in MEASURE_COMMANDS:
                result = _run_measure(command, cfg, out, threads)
            elif command == "dirac-eigs":
                result = _run_dirac(cfg, out, threads)
            elif command == "convergence":
                result = _run_convergence(cfg, out, threads)
            else:
                raise ConfigError(f"unknown command {command!r}")
        except KernelError as exc:
            raise ConfigError(f"kernel: {exc}") from None
    result.manifest.outputs = sorted(result.files)
    return result


def _write(result: RunResult, manifest_path: str) -> None:
    for path, text in result.files.items():
        with open(path, "w", newline="") as fh:
            fh.write(text)
    with open(manifest_path, "w") as fh:
        fh.write(result.manifest.to_json())


def _raw_from_args(command: str, args) -> dict:
    raw = load_config(args.config) if args.config else {}
    if args.preset:
        raw["preset"] = args.preset
    if "preset" not in raw:
        raw["preset"] = next(iter(PRESETS[command]))
    for flag, key in (("epsilon", "epsilon"), ("order", "order"), ("pole_type", "pole_type"),
                      ("disc_min", "disc_min"), ("disc_max", "disc_max"), ("rel_tol", "rel_tol"),
                      ("abs_tol", "abs_tol")):
        v = getattr(args, flag, None)
        if v is not None:
            raw[key] = v
    if getattr(args, "poles_file", None):
        cfg = load_config(args.poles_file) if args.poles_file.endswith(".json") else None
        if cfg is None or "poles" not in cfg:
            raise ConfigError(f"--poles-file {args.poles_file!r}: expected a JSON object with a 'poles' list")
        raw["poles"] = cfg["poles"]
        raw.setdefault("pole_type", "file")
    if getattr(args, "grid", None):
        start, stop, num = args.grid
        raw["grid"] = {"start": start, "stop": stop, "num": int(num)}
    params = dict(raw.get("params", {}) or {})
    for flag in ("map_scale", "flux", "radius", "gamma", "count"):
        v = getattr(args, flag, None)
        if v is not None:
            params[flag] = v
    if getattr(args, "defect", False):
        params["defect"] = True
    if params:
        raw["params"] = params
    if getattr(args, "prob_interval", None):
        raw["prob_interval"] = list(args.prob_interval)
    return raw


def _order(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid kernel order {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"kernel order must be at least 1, got {v}")
    return v


def _threads(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("--threads must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specmeasure", description="Smoothed spectral measures from resolvents.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} command")
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS[name]))
        p.add_argument("--epsilon", type=float)
        p.add_argument("--order", type=_order, help="kernel order m (default 2)")
        p.add_argument("--pole-type", choices=["equispaced", "file"])
        p.add_argument("--poles-file", help="JSON file {'poles': [[re, im], ...]}")
        p.add_argument("--disc-min", type=int)
        p.add_argument("--disc-max", type=int)
        p.add_argument("--rel-tol", type=float)
        p.add_argument("--abs-tol", type=float)
        p.add_argument("--threads", type=_threads, default=None,
                       help="worker threads (default: SPECMEASURE_THREADS or CPU count)")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--manifest", help="manifest path (default: OUT.manifest.json)")
        if name in MEASURE_COMMANDS:
            p.add_argument("--grid", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
        if name in ("diff-meas", "rse-meas", "dirac-eigs", "convergence"):
            p.add_argument("--map-scale", type=float)
        if name == "rse-meas":
            p.add_argument("--prob-interval", nargs=2, type=float, metavar=("A", "B"))
        if name == "infmat-meas":
            p.add_argument("--flux", type=float)
            p.add_argument("--radius", type=int)
            p.add_argument("--defect", action="store_true")
        if name == "dirac-eigs":
            p.add_argument("--gamma", type=float)
            p.add_argument("--count", type=int)
    rp = sub.add_parser("replay", help="re-run a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="write the CSV here instead of the recorded path")
    rp.add_argument("--threads", type=_threads, default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads or default_threads()
    try:
        if args.command == "replay":
            try:
                with open(args.manifest) as fh:
                    old = RunManifest.from_json(fh.read())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read manifest {args.manifest!r}: {exc}") from None
            command = old.command
            cfg = resolve_config(command, old.config)
            out = args.out or (old.outputs[0] if old.outputs else f"{command}.csv")
            manifest_path = args.manifest if not args.out else out + ".manifest.json"
        else:
            command = args.command
            cfg = resolve_config(command, _raw_from_args(command, args))
            out = args.out or f"{command}.csv"
            manifest_path = args.manifest or out + ".manifest.json"
        result = run_command(command, cfg, out, threads)
    except ConfigError as exc:
        where = ""
        cfg_path = getattr(args, "config", None)
        if cfg_path and os.path.exists(cfg_path):
            with open(cfg_path) as fh:
                line = locate_field(fh.read(), str(exc))
            if line is not None:
                where = f"{cfg_path}: line {line}: "
        print(f"specmeasure: configuration error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write(result, manifest_path)
    for key, value in result.manifest.results.items():
        print(f"{key}: {json.dumps(value)}")
    if result.exit_code == EXIT_NONCONVERGED:
        print(f"specmeasure: some samples did not converge; partial results in {out}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
