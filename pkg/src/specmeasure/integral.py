"""Resolvent samples for integral operators on L^2([-1, 1]).

The operator ``[L u](x) = a(x) u(x) + int_{-1}^{1} g(x, y) u(y) dy`` is
discretized by collocation at Chebyshev points with Clenshaw-Curtis weights.
When ``g`` has low numerical rank the kernel block is replaced by a skeleton
factorization and the shifted system is solved with the Woodbury identity in
``O(N r^2)`` operations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .chebyshev import chebpts, chop_length, clenshaw_curtis, vals2coeffs
from .core import AdaptiveConfig, ResolventSample, adaptive_refine

__all__ = [
    "NonSelfAdjointWarning",
    "IntOpSpec",
    "CollocationSystem",
    "IntegralSampler",
    "int_resolvent_sample",
    "interior_layer_probe",
    "multiplication_resolvent",
    "multiplication_density",
    "sqrt_three_halves_x",
    "gaussian_operator",
    "multiplication_operator",
    "polynomial_function",
    "polynomial_kernel",
    "INTEGRAL_PRESETS",
]

RANK_TOL = 1e-14
SKELETON_GRID = 129


class NonSelfAdjointWarning(UserWarning):
    """The operator failed a sampled symmetry check."""


@dataclass(frozen=True)
class IntOpSpec:
    """``a(x) u + int g(x, y) u(y) dy``; ``kernel=None`` means a pure multiplication operator."""

    multiplier: Callable[[np.ndarray], np.ndarray]
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    name: str = "integral operator"
    hermitian: bool = field(init=False, default=True)

    def __post_init__(self):
        object.__setattr__(self, "hermitian", self.check_hermitian())
        if not self.hermitian:
            warnings.warn(f"{self.name}: sampled symmetry check failed; "
                          "the operator may not be self-adjoint", NonSelfAdjointWarning, stacklevel=3)

    def check_hermitian(self, n: int = 20, tol: float = 1e-12) -> bool:
        x = chebpts(n)
        a = np.asarray(self.multiplier(x))
        ok = bool(np.all(np.abs(np.imag(a)) <= tol * (1 + np.abs(a))))
        if self.kernel is not None:
            X, Y = np.meshgrid(x, x, indexing="ij")
            G = np.asarray(self.kernel(X, Y), dtype=complex)
            ok &= bool(np.max(np.abs(G - G.T.conj())) <= tol * max(1.0, np.max(np.abs(G))))
        return ok


@lru_cache(maxsize=32)
def _cc(n: int):
    x, w = clenshaw_curtis(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _skeleton(kernel, tol: float = RANK_TOL, n: int = SKELETON_GRID):
    """Pivot locations of a low-rank skeleton of ``g`` found on a coarse Chebyshev grid.

    The rank is the number of singular values above ``tol * sigma_max``; the
    rows and columns are then picked by Gaussian elimination with complete
    pivoting, so that ``g(x, y) ~ g(x, yp) G(xp, yp)^{-1} g(xp, y)``.
    """
    x = chebpts(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    G = np.asarray(kernel(X, Y), dtype=complex)
    s = np.linalg.svd(G, compute_uv=False)
    if s[0] == 0:
        return 0, np.array([]), np.array([])
    r = int(np.sum(s > tol * s[0]))
    E = G.copy()
    rows, cols = [], []
    for _ in range(r):
        i, j = np.unravel_index(np.argmax(np.abs(E)), E.shape)
        if E[i, j] == 0:
            break
        rows.append(i)
        cols.append(j)
        E = E - np.outer(E[:, j], E[i, :]) / E[i, j]
    return len(rows), x[rows], x[cols]


@dataclass
class CollocationSystem:
    """Shifted collocation system ``(diag(a - z) + G W) u = f`` at ``N`` Chebyshev points."""

    size: int
    nodes: np.ndarray
    weights: np.ndarray
    diagonal: np.ndarray
    dense: np.ndarray | None = None
    left: np.ndarray | None = None  # g(x, yp)
    core: np.ndarray | None = None  # g(xp, yp)
    right: np.ndarray | None = None  # g(xp, y) * w

    @property
    def low_rank(self) -> bool:
        return self.left is not None

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diagonal * u
        if self.dense is not None:
            out = out + self.dense @ u
        elif self.low_rank:
            out = out + self.left @ np.linalg.solve(self.core, self.right @ u)
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        d = self.diagonal
        if self.dense is not None:
            return np.linalg.solve(np.diag(d) + self.dense, rhs)
        if not self.low_rank:
            return rhs / d
        # (D + U C^{-1} V) u = f  =>  u = D^{-1}f - D^{-1}U (C + V D^{-1} U)^{-1} V D^{-1} f
        Dinv_f = rhs / d
        Dinv_U = self.left / d[:, None]
        small = self.core + self.right @ Dinv_U
        return Dinv_f - Dinv_U @ np.linalg.solve(small, self.right @ Dinv_f)


def assemble_collocation(spec: IntOpSpec, z: complex, n: int, compress: bool | None = None) -> CollocationSystem:
    """Collocation discretization of ``L - z`` with ``n`` nodes."""
    x, w = _cc(n)
    a = np.asarray(spec.multiplier(x), dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{spec.name}: multiplier is not finite on the collocation grid")
    sys = CollocationSystem(n, x, w, a - z)
    if spec.kernel is None:
        return sys
    rank, xp, yp = _skeleton_cached(spec)
    use_lr = rank < n / 4 if compress is None else compress
    if use_lr and rank > 0:
        sys.left = np.asarray(spec.kernel(x[:, None], yp[None, :]), dtype=complex)
        sys.core = np.asarray(spec.kernel(xp[:, None], yp[None, :]), dtype=complex)
        sys.right = np.asarray(spec.kernel(xp[:, None], x[None, :]), dtype=complex) * w[None, :]
    elif rank > 0 or not use_lr:
        X, Y = np.meshgrid(x, x, indexing="ij")
        G = np.asarray(spec.kernel(X, Y), dtype=complex)
        if not np.all(np.isfinite(G)):
            raise ValueError(f"{spec.name}: kernel is not finite on the collocation grid")
        sys.dense = G * w[None, :]
    return sys


_SKELETONS: dict = {}


def _skeleton_cached(spec: IntOpSpec):
    key = id(spec)
    hit = _SKELETONS.get(key)
    if hit is None or hit[0] is not spec:
        hit = (spec, _skeleton(spec.kernel))
        _SKELETONS[key] = hit
    return hit[1]


def _solve_inner(spec, f, z, n, compress=None, chop_tol=None):
    sys = assemble_collocation(spec, z, n, compress)
    fx = np.asarray(f(sys.nodes), dtype=complex)
    u = sys.solve(fx)
    value = np.sum(sys.weights * u * np.conj(fx))
    resolved = chop_length(vals2coeffs(u), chop_tol) if chop_tol else None
    return value, resolved


class IntegralSampler:
    """:class:`ResolventSampler` for an :class:`IntOpSpec` and a fixed vector ``f``."""

    def __init__(self, spec: IntOpSpec, f: Callable[[np.ndarray], np.ndarray], compress: bool | None = None):
        self.spec = spec
        self.f = f
        self.compress = compress
        self.description = spec.name

    def sample(self, z: complex, cfg: AdaptiveConfig | None = None) -> ResolventSample:
        return int_resolvent_sample(self.spec, self.f, z, cfg, compress=self.compress)


def int_resolvent_sample(spec: IntOpSpec, f: Callable[[np.ndarray], np.ndarray], z: complex,
                         cfg: AdaptiveConfig | None = None, compress: bool | None = None) -> ResolventSample:
    """Adaptive ``<(L - z)^{-1} f, f>`` with Clenshaw-Curtis inner products.

    ``resolved_size`` is the Chebyshev chop length of the accepted solution,
    i.e. the number of collocation points the solution actually needs.
    """
    if z.imag == 0:
        raise ValueError("shift must have nonzero imaginary part")
    cfg = cfg or AdaptiveConfig()
    solve = lambda n: _solve_inner(spec, f, z, n, compress, cfg.rel_tol)  # noqa: E731
    return adaptive_refine(solve, z, cfg)


def interior_layer_probe(spec: IntOpSpec, f, x0: float, epsilons: Sequence[float],
                         cfg: AdaptiveConfig | None = None) -> list[tuple[float, int, int]]:
    """Discretization needed to resolve ``(L - x0 - i eps)^{-1} f`` for each ``eps``.

    Returns rows ``(eps, resolved_size, accepted_size)`` where the accepted
    size is the grid at which the adaptive loop stagnated.
    """
    cfg = cfg or AdaptiveConfig()
    rows = []
    for eps in epsilons:
        s = int_resolvent_sample(spec, f, complex(x0, -eps), cfg)
        rows.append((float(eps), int(s.resolved_size), int(s.discretization_size)))
    return rows


def multiplication_resolvent(z: complex) -> complex:
    """Closed form ``<(x - z)^{-1} f, f>`` for ``u -> x u`` on [-1, 1] and ``f = sqrt(3/2) x``."""
    z = complex(z)
    return 3 * z + 1.5 * z * z * np.log((1 - z) / (-1 - z))


def multiplication_density(y):
    """Radon-Nikodym derivative ``|f(y)|^2 = 1.5 y^2`` on [-1, 1] for the multiplication oracle."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= 1, 1.5 * y * y, 0.0)


def sqrt_three_halves_x(x):
    return np.sqrt(1.5) * np.asarray(x)


def multiplication_operator() -> IntOpSpec:
    return IntOpSpec(lambda x: np.asarray(x, dtype=float), None, name="multiplication x u")


def _gaussian(x, y):
    return np.exp(-(x * x + y * y))


def gaussian_operator() -> IntOpSpec:
    """``x u(x) + int exp(-(x^2 + y^2)) u(y) dy``."""
    return IntOpSpec(lambda x: np.asarray(x, dtype=float), _gaussian, name="x u + gaussian kernel")


def polynomial_function(coeffs: Sequence[float]) -> Callable:
    """Monomial-coefficient polynomial ``sum_k c_k x^k``."""
    c = np.asarray(coeffs, dtype=float)[::-1]
    return lambda x: np.polyval(c, np.asarray(x, dtype=float))


def polynomial_kernel(table: Sequence[Sequence[float]]) -> Callable:
    """Kernel ``sum_{i,j} c_ij x^i y^j`` from a nested coefficient table."""
    C = np.asarray(table, dtype=float)
    if C.ndim != 2:
        raise ValueError("kernel table must be two dimensional")

    def g(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.zeros(x.shape)
        for i in range(C.shape[0]):
            for j in range(C.shape[1]):
                if C[i, j]:
                    out = out + C[i, j] * x**i * y**j
        return out

    return g


INTEGRAL_PRESETS = {
    "identity": multiplication_operator,
    "gaussian": gaussian_operator,
}
