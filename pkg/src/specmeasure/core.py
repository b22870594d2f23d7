"""Smoothed spectral measures from resolvent samples.

Given a rational kernel with poles ``a_j`` and residues ``alpha_j``, the
smoothed measure at ``x`` is

    [K_eps * mu_f](x) = -(1/pi) * sum_j Im(alpha_j <R(x - eps a_j) f, f>),

so one resolvent sample per pole is needed.  Operator backends implement the
:class:`ResolventSampler` protocol; everything here is backend agnostic.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .chebyshev import clenshaw_curtis
from .kernel import RationalKernel, make_kernel

__all__ = [
    "AdaptiveConfig",
    "ResolventSample",
    "ResolventSampler",
    "NonConvergenceError",
    "MeasureGrid",
    "EigenvalueEstimate",
    "SweepTable",
    "adaptive_refine",
    "FunctionSampler",
    "smoothed_measure",
    "smoothed_measure_full",
    "smoothed_measure_grid",
    "eigen_scan",
    "integrate_against",
    "convergence_sweep",
    "default_threads",
    "loglog_slope",
]


@dataclass(frozen=True)
class AdaptiveConfig:
    disc_min: int = 64
    disc_max: int = 65536
    refinement_factor: float = 2.0
    rel_tol: float = 1e-11
    abs_tol: float = 1e-13

    def __post_init__(self):
        if self.disc_min < 1 or self.disc_min > self.disc_max:
            raise ValueError(f"need 1 <= disc_min <= disc_max, got {self.disc_min}, {self.disc_max}")
        if not self.refinement_factor > 1:
            raise ValueError("refinement_factor must exceed 1")
        if self.rel_tol < 0 or self.abs_tol < 0:
            raise ValueError("tolerances must be nonnegative")

    def tolerance(self, value: complex) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


@dataclass
class ResolventSample:
    """One scalar ``<R(z) f, f>`` together with how it was obtained."""

    value: complex
    discretization_size: int
    error_estimate: float
    converged: bool
    z: complex = 0j
    history: list = field(default_factory=list)
    resolved_size: int | None = None


class ResolventSampler(Protocol):
    description: str

    def sample(self, z: complex, cfg: AdaptiveConfig) -> ResolventSample: ...


class NonConvergenceError(RuntimeError):
    """A resolvent sample did not stagnate before ``disc_max``; carries the best value."""

    def __init__(self, message: str, value: float, diagnostics: list):
        super().__init__(message)
        self.value = value
        self.diagnostics = diagnostics


def _next_size(n: int, cfg: AdaptiveConfig) -> int:
    return max(n + 1, int(math.ceil(n * cfg.refinement_factor)))


def adaptive_refine(solve: Callable[[int], tuple], z: complex, cfg: AdaptiveConfig,
                    sizes: Callable[[int], int] = lambda n: n) -> ResolventSample:
    """Geometric refinement driver shared by all discretized backends.

    ``solve(N)`` returns ``(value, resolved_size)``.  A sample is accepted
    once two successive sizes agree to ``max(abs_tol, rel_tol |value|)``.
    ``sizes`` lets a backend round ``N`` to a size it supports.
    """
    n = sizes(cfg.disc_min)
    history = []
    prev = None
    last_n = None
    while True:
        value, resolved = solve(n)
        history.append((n, complex(value)))
        if not np.isfinite(value):
            prev = None
        elif prev is not None:
            err = abs(value - prev)
            if err <= cfg.tolerance(value):
                return ResolventSample(complex(value), n, float(err), True, z, history, resolved)
        prev = value
        last_n = n
        nxt = sizes(_next_size(n, cfg))
        if nxt > cfg.disc_max or nxt <= last_n:
            err = abs(history[-1][1] - history[-2][1]) if len(history) > 1 else float("inf")
            return ResolventSample(complex(value), n, float(err), False, z, history, resolved)
        n = nxt


class FunctionSampler:
    """Wrap an exact (or user supplied) resolvent ``z -> <R(z) f, f>``."""

    def __init__(self, fun: Callable[[complex], complex], description: str = "function"):
        self.fun = fun
        self.description = description

    def sample(self, z: complex, cfg: AdaptiveConfig | None = None) -> ResolventSample:
        return ResolventSample(complex(self.fun(z)), 0, 0.0, True, z)


def _pole_shifts(kernel: RationalKernel, x: float, epsilon: float) -> np.ndarray:
    return x - epsilon * kernel.poles


def _combine(kernel: RationalKernel, values: Sequence[complex]) -> float:
    total = 0.0
    for alpha, v in zip(kernel.alphas, values):
        total += (alpha * v).imag
    return -total / math.pi


def _check_eps(epsilon: float):
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")


def smoothed_measure(sampler: ResolventSampler, kernel: RationalKernel, x: float, epsilon: float,
                     cfg: AdaptiveConfig | None = None, strict: bool = True) -> tuple[float, list]:
    """Evaluate ``[K_eps * mu_f](x)``; returns ``(value, samples)``.

    With ``strict`` a non-converged resolvent sample raises
    :class:`NonConvergenceError` carrying the best available value.
    """
    _check_eps(epsilon)
    cfg = cfg or AdaptiveConfig()
    samples = [sampler.sample(complex(z), cfg) for z in _pole_shifts(kernel, x, epsilon)]
    value = _combine(kernel, [s.value for s in samples])
    if strict and not all(s.converged for s in samples):
        raise NonConvergenceError(f"resolvent not resolved at x={x} within disc_max={cfg.disc_max}",
                                  value, samples)
    return value, samples


def smoothed_measure_full(sampler: ResolventSampler, kernel: RationalKernel, x: float, epsilon: float,
                          cfg: AdaptiveConfig | None = None) -> float:
    """Same quantity from all 2m poles, without using conjugate symmetry of the resolvent."""
    cfg = cfg or AdaptiveConfig()
    a, al = kernel.poles, kernel.alphas
    up = [sampler.sample(complex(x - epsilon * aj), cfg).value for aj in a]
    down = [sampler.sample(complex(x - epsilon * np.conj(aj)), cfg).value for aj in a]
    total = sum(al[j] * up[j] - np.conj(al[j]) * down[j] for j in range(len(a)))
    return float((-total / (2j * math.pi)).real)


@dataclass
class MeasureGrid:
    points: np.ndarray
    epsilon: float
    order: int
    values: np.ndarray
    diagnostics: list

    @property
    def clipped_values(self) -> np.ndarray:
        return np.maximum(0.0, self.values)

    @property
    def max_sizes(self) -> list[int]:
        return [max((s.discretization_size for s in d), default=0) for d in self.diagnostics]

    @property
    def converged(self) -> list[bool]:
        return [all(s.converged for s in d) for d in self.diagnostics]

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    def rows(self) -> list[list[str]]:
        out = []
        for x, v, c, n, ok in zip(self.points, self.values, self.clipped_values, self.max_sizes, self.converged):
            out.append([_fmt(x), _fmt(v), _fmt(c), _fmt(self.epsilon), str(self.order), str(n), str(int(ok))])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> str:
        rec = {
            "epsilon": _fmt(self.epsilon),
            "order": self.order,
            "points": [_fmt(x) for x in self.points],
            "values": [_fmt(v) for v in self.values],
            "clipped": [_fmt(v) for v in self.clipped_values],
            "max_N": self.max_sizes,
            "converged": self.converged,
        }
        return json.dumps(rec, indent=1)

    @classmethod
    def from_csv(cls, text: str) -> "MeasureGrid":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty measure grid")
        pts = np.array([float(r["x"]) for r in rows])
        vals = np.array([float(r["value"]) for r in rows])
        diags = [[ResolventSample(0j, int(r["max_N"]), 0.0, bool(int(r["converged"])))] for r in rows]
        return cls(pts, float(rows[0]["epsilon"]), int(rows[0]["order"]), vals, diags)


CSV_COLUMNS = ["x", "value", "clipped", "epsilon", "order", "max_N", "converged"]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def default_threads() -> int:
    env = os.environ.get("SPECMEASURE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def smoothed_measure_grid(sampler: ResolventSampler, kernel: RationalKernel, points: Sequence[float],
                          epsilon: float, cfg: AdaptiveConfig | None = None,
                          threads: int = 1) -> MeasureGrid:
    """Evaluate the smoothed measure on a grid of points.

    Each (point, pole) resolvent sample is an independent task.  Results are
    reduced in index order, so the output does not depend on ``threads``.
    """
    _check_eps(epsilon)
    cfg = cfg or AdaptiveConfig()
    pts = np.asarray(points, dtype=float).ravel()
    if pts.size == 0:
        raise ValueError("evaluation grid is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError("evaluation points must be finite")
    m = kernel.order
    shifts = [complex(z) for x in pts for z in _pole_shifts(kernel, x, epsilon)]
    task = lambda z: sampler.sample(z, cfg)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(task, shifts))
    else:
        samples = [task(z) for z in shifts]
    values = np.empty(len(pts))
    diags = []
    for i in range(len(pts)):
        chunk = samples[i * m:(i + 1) * m]
        values[i] = _combine(kernel, [s.value for s in chunk])
        diags.append(chunk)
    return MeasureGrid(pts, float(epsilon), m, values, diags)


@dataclass
class EigenvalueEstimate:
    location: float
    projection_weight: float
    epsilon: float
    history: list = field(default_factory=list)


def _nu(sampler, x, epsilon, cfg):
    s = sampler.sample(complex(x, epsilon), cfg)
    return epsilon * s.value.imag


def _parabola_vertex(x, y):
    (x0, x1, x2), (y0, y1, y2) = x, y
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
    B = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / den
    if A >= 0:
        return None
    return -B / (2 * A)


def _golden_max(fun, a, b, xtol, c=None, fc=None, history=None):
    """Golden-section maximisation on ``[a, b]``; ``c`` is an optional interior guess."""
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > xtol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = fun(x2)
        if history is not None:
            history.append((a, b))
    return (x1, f1) if f1 >= f2 else (x2, f2)


def eigen_scan(sampler: ResolventSampler, interval: tuple[float, float], epsilon: float,
               grid_density: int = 200, cfg: AdaptiveConfig | None = None,
               noise_floor: float | None = None, xtol: float | None = None,
               points: Sequence[float] | None = None) -> list[EigenvalueEstimate]:
    """Locate eigenvalues as peaks of ``nu(x) = eps * Im <R(x + i eps) f, f>``.

    Peaks on the sampling grid are polished by a parabolic step and then
    golden-section search inside the neighbouring bracket.  Peak heights
    approximate ``<P_lambda f, f>`` up to ``O(eps)``.
    """
    _check_eps(epsilon)
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    cfg = cfg or AdaptiveConfig()
    floor = 1e2 * cfg.abs_tol if noise_floor is None else noise_floor
    xtol = 1e-3 * epsilon if xtol is None else xtol
    grid = np.linspace(lo, hi, grid_density) if points is None else np.asarray(points, dtype=float)
    nu = np.array([_nu(sampler, x, epsilon, cfg) for x in grid])
    found = []
    for i in range(1, len(grid) - 1):
        if not (nu[i] > nu[i - 1] and nu[i] >= nu[i + 1] and nu[i] > floor):
            continue
        fun = lambda x: _nu(sampler, x, epsilon, cfg)  # noqa: E731
        pts = [(grid[i - 1], nu[i - 1]), (grid[i], nu[i]), (grid[i + 1], nu[i + 1])]
        p = _parabola_vertex([q[0] for q in pts], [q[1] for q in pts])
        if p is not None and grid[i - 1] < p < grid[i + 1] and p != grid[i]:
            pts.append((p, fun(p)))
        pts.sort()
        k = max(range(len(pts)), key=lambda j: pts[j][1])
        k = min(max(k, 1), len(pts) - 2)
        history = [(grid[i - 1], grid[i + 1])]
        loc, height = _golden_max(fun, pts[k - 1][0], pts[k + 1][0], xtol, history=history)
        found.append(EigenvalueEstimate(float(loc), float(max(height, 0.0)), float(epsilon), history))
    return found


def integrate_against(sampler: ResolventSampler, kernel: RationalKernel, interval: tuple[float, float],
                      epsilon: float, quad_order: int = 20, cfg: AdaptiveConfig | None = None,
                      clipped: bool = False, threads: int = 1) -> float:
    """``int_a^b [K_eps * mu_f](y) dy`` by Clenshaw-Curtis quadrature."""
    a, b = interval
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    if quad_order < 2:
        raise ValueError("quad_order must be at least 2")
    nodes, weights = clenshaw_curtis(quad_order, a, b)
    grid = smoothed_measure_grid(sampler, kernel, nodes, epsilon, cfg, threads=threads)
    vals = grid.clipped_values if clipped else grid.values
    return float(np.dot(weights, vals))


@dataclass
class SweepTable:
    rows: list  # (order, epsilon, value, rel_error)
    slopes: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "epsilon", "rel_error", "value"])
        for m, eps, v, e in self.rows:
            w.writerow([m, _fmt(eps), _fmt(e), _fmt(v)])
        return buf.getvalue()


def loglog_slope(epsilons: Sequence[float], errors: Sequence[float]) -> float:
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return float("nan")
    return float(np.polyfit(np.log(epsilons), np.log(e), 1)[0])


def convergence_sweep(sampler: ResolventSampler, kernel_orders: Sequence[int], epsilons: Sequence[float],
                      x0: float, reference: float, cfg: AdaptiveConfig | None = None,
                      measure: Callable | None = None) -> SweepTable:
    """Relative pointwise errors against ``reference`` and fitted log-log slopes per order."""
    if reference == 0 or not np.isfinite(reference):
        raise ValueError("reference must be finite and nonzero for relative errors")
    cfg = cfg or AdaptiveConfig()
    rows, slopes = [], {}
    for m in kernel_orders:
        kernel = make_kernel(m)
        errs = []
        for eps in epsilons:
            if measure is not None:
                v = measure(kernel, x0, eps)
            else:
                v, _ = smoothed_measure(sampler, kernel, x0, eps, cfg, strict=False)
            err = abs(v - reference) / abs(reference)
            rows.append((m, eps, v, err))
            errs.append(err)
        slopes[m] = loglog_slope(epsilons, errs) if len(epsilons) > 1 else float("nan")
    return SweepTable(rows, slopes)
