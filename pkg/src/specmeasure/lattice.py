"""Resolvent samples for self-adjoint infinite matrices.

An infinite Hermitian matrix ``A`` with column support ``F`` (``a_ij = 0``
whenever ``i > F(j)``, 1-based) is truncated to the rectangular section
``P_F(N) (A - z) P_N``.  The shifted equation is solved in the least-squares
sense, which keeps the finite sections free of spurious eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsmr, splu

from .core import AdaptiveConfig, ResolventSample, adaptive_refine, smoothed_measure
from .kernel import RationalKernel

__all__ = [
    "SupportError",
    "InfMatSpec",
    "GrapheneSpec",
    "LatticeSampler",
    "least_squares_section",
    "infmat_resolvent_sample",
    "jacobi_operator",
    "diagonal_operator",
    "free_jacobi_resolvent",
    "build_graphene",
    "graphene_sites",
    "defect_potential",
    "load_coordinate_list",
    "ButterflyTable",
    "butterfly_sweep",
]


class SupportError(ValueError):
    """The right-hand side is not supported inside the smallest section."""

    def __init__(self, message: str, required_size: int):
        super().__init__(message)
        self.required_size = required_size


def _support_fn(support) -> Callable[[int], int]:
    if callable(support):
        return support
    table = np.asarray(support, dtype=np.int64)

    def F(j: int) -> int:
        if j < 1 or j > len(table):
            raise IndexError(f"column {j} is outside the stored support table (1..{len(table)})")
        return int(table[j - 1])

    return F


@dataclass(frozen=True, eq=False)
class InfMatSpec:
    """Hermitian infinite matrix given by entries and a column support function.

    Parameters
    ----------
    support : callable or sequence of int
        ``F(j)`` for 1-based column ``j``: the last row that can be nonzero.
        A sequence is read as the table ``F(1), F(2), ...``.
    entry : callable, optional
        ``entry(i, j)`` for 1-based indices.  Used for columns outside ``block``.
    block : sparse matrix, optional
        Explicit leading block; its columns must carry all rows up to ``F(j)``.
    columns : callable, optional
        ``columns(j) -> (rows, values)`` with 1-based rows; faster than ``entry``.
    max_columns : int, optional
        Largest usable column count (``None`` means unbounded).
    """

    support: object
    entry: Callable[[int, int], complex] | None = None
    block: sparse.spmatrix | None = None
    columns: Callable[[int], tuple] | None = None
    max_columns: int | None = None
    name: str = "infinite matrix"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.entry is None and self.block is None and self.columns is None:
            raise ValueError("need an entry accessor, a column generator or an explicit block")
        F = _support_fn(self.support)
        object.__setattr__(self, "F", F)
        if self.block is not None:
            B = sparse.csc_matrix(self.block, dtype=complex)
            object.__setattr__(self, "block", B)
            limit = B.shape[1] if self.max_columns is None else min(self.max_columns, B.shape[1])
            if self.entry is None and self.columns is None:
                object.__setattr__(self, "max_columns", limit)
        n_check = min(self.max_columns or 64, 64)
        vals = [F(j) for j in range(1, n_check + 1)]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("column support F must be nondecreasing")
        if any(v < j for j, v in enumerate(vals, start=1)):
            raise ValueError("column support must satisfy F(j) >= j")
        if not self.check_hermitian(n_check):
            raise ValueError(f"{self.name}: sampled entries are not Hermitian")

    def check_hermitian(self, n: int = 64, tol: float = 1e-12) -> bool:
        S = self.section(n).toarray()[:n, :n]
        return bool(np.max(np.abs(S - S.conj().T), initial=0.0) <= tol * max(1.0, np.max(np.abs(S))))

    def _column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows (0-based) and values of column ``j`` (1-based)."""
        B = self.block
        if B is not None and j <= B.shape[1]:
            lo, hi = B.indptr[j - 1], B.indptr[j]
            return B.indices[lo:hi], B.data[lo:hi]
        if self.columns is not None:
            rows, vals = self.columns(j)
            return np.asarray(rows, dtype=np.int64) - 1, np.asarray(vals, dtype=complex)
        Fj = self.F(j)
        rows = np.arange(1, Fj + 1)
        vals = np.array([self.entry(int(i), j) for i in rows], dtype=complex)
        keep = vals != 0
        return rows[keep] - 1, vals[keep]

    def section(self, N: int) -> sparse.csc_matrix:
        """``P_F(N) A P_N`` as an ``F(N) x N`` sparse matrix (memoized)."""
        if self.max_columns is not None and N > self.max_columns:
            raise IndexError(f"{self.name}: only {self.max_columns} columns are available, asked for {N}")
        hit = self._cache.get(N)
        if hit is not None:
            return hit
        rows_n = self.F(N)
        B = self.block
        if B is not None and N <= B.shape[1] and rows_n <= B.shape[0]:
            S = B[:rows_n, :N]
        else:
            ptr, idx, dat = [0], [], []
            for j in range(1, N + 1):
                r, v = self._column(j)
                keep = r < rows_n
                idx.append(r[keep])
                dat.append(v[keep])
                ptr.append(ptr[-1] + int(keep.sum()))
            S = sparse.csc_matrix((np.concatenate(dat) if dat else [], np.concatenate(idx) if idx else [], ptr),
                                  shape=(rows_n, N), dtype=complex)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[N] = S
        return S

    def min_size_for(self, support_end: int) -> int:
        """Smallest ``N`` with ``F(N) >= support_end``."""
        N = 1
        while self.F(N) < support_end:
            N += 1
            if self.max_columns is not None and N > self.max_columns:
                raise IndexError("support exceeds the stored range")
        return N


REGULARIZATION = 1e-5
REFINEMENT_STEPS = 20
LSMR_TOL = 1e-15


def _augmented_solve(B: sparse.csc_matrix, fm: np.ndarray, a: float) -> np.ndarray:
    """Least squares through ``[[a I, B], [B^H, 0]] [r / a; u] = [f; 0]``.

    The factorization uses the quasi-definite neighbour with ``-delta I`` in
    the lower block, which needs no pivoting, so a fill-reducing symmetric
    ordering survives.  Iterative refinement against the exact system removes
    the regularization (contraction factor about ``delta / a``).
    """
    m, N = B.shape
    BH = B.conj().T.tocsc()
    K = sparse.bmat([[a * sparse.eye(m, format="csc"), B], [BH, None]], format="csc")
    Kd = sparse.bmat([[a * sparse.eye(m, format="csc"), B],
                      [BH, -REGULARIZATION * a * sparse.eye(N, format="csc")]], format="csc")
    lu = splu(Kd, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    b = np.r_[fm, np.zeros(N, dtype=complex)]
    x = lu.solve(b)
    scale = np.linalg.norm(b)
    for _ in range(REFINEMENT_STEPS):
        r = b - K @ x
        if np.linalg.norm(r) <= 1e-15 * scale:
            break
        x = x + lu.solve(r)
    return x[m:]


def least_squares_section(spec: InfMatSpec, f: np.ndarray, z: complex, N: int,
                          method: str = "direct") -> tuple[np.ndarray, float]:
    """Least-squares solution of ``P_F(N) (A - z) P_N u = P_F(N) f``.

    ``method="direct"`` factors the augmented system with scaling
    ``a = |Im z|``, a lower bound for the smallest singular value of
    ``B = P_F(N) (A - z) P_N``; see :func:`_augmented_solve`.  ``"lsmr"``
    runs LSMR on ``B`` (iterations grow like ``|A| / |Im z|`` but not with
    ``N``).  Neither forms ``B^H B``.  Returns ``(u, residual norm)``.
    """
    S = spec.section(N)
    m = S.shape[0]
    B = (S - z * sparse.eye(m, N, dtype=complex, format="csc")).tocsc()
    fm = np.zeros(m, dtype=complex)
    k = min(len(f), m)
    fm[:k] = f[:k]
    if method == "direct":
        u = _augmented_solve(B, fm, abs(z.imag))
    elif method == "lsmr":
        u = lsmr(B.tocsr(), fm, atol=LSMR_TOL, btol=LSMR_TOL, maxiter=50 * N)[0]
    else:
        raise ValueError(f"unknown least-squares method {method!r}")
    return u, float(np.linalg.norm(B @ u - fm))


def infmat_resolvent_sample(spec: InfMatSpec, f: np.ndarray, z: complex,
                            cfg: AdaptiveConfig | None = None) -> ResolventSample:
    """Adaptive ``<(A - z)^{-1} f, f>`` from rectangular least-squares sections."""
    if z.imag == 0:
        raise ValueError("shift must have nonzero imaginary part")
    cfg = cfg or AdaptiveConfig()
    f = np.asarray(f, dtype=complex)
    nz = np.nonzero(f)[0]
    end = int(nz[-1]) + 1 if nz.size else 1
    if end > spec.F(cfg.disc_min):
        raise SupportError(f"right-hand side has support up to {end} but F(disc_min) = {spec.F(cfg.disc_min)}; "
                           f"need disc_min >= {spec.min_size_for(end)}", spec.min_size_for(end))
    limit = spec.max_columns

    def solve(n):
        if limit is not None and n > limit:
            return math.nan, None
        u, _ = least_squares_section(spec, f, z, n)
        k = min(len(f), n)
        return complex(np.sum(u[:k] * np.conj(f[:k]))), None

    cap = cfg if limit is None or cfg.disc_max <= limit else AdaptiveConfig(
        min(cfg.disc_min, limit), limit, cfg.refinement_factor, cfg.rel_tol, cfg.abs_tol)
    return adaptive_refine(solve, z, cap, sizes=lambda n: n if limit is None else min(n, max(limit, 1)))


class LatticeSampler:
    """:class:`ResolventSampler` for an :class:`InfMatSpec` and a finitely supported vector."""

    def __init__(self, spec: InfMatSpec, f: Sequence[complex] | np.ndarray):
        self.spec = spec
        self.f = np.asarray(f, dtype=complex)
        self.description = spec.name

    def sample(self, z: complex, cfg: AdaptiveConfig | None = None) -> ResolventSample:
        return infmat_resolvent_sample(self.spec, self.f, z, cfg)


# ---------------------------------------------------------------------------
# Builders


def jacobi_operator(diagonal: Callable[[int], float] | float = 0.0,
                    offdiagonal: Callable[[int], float] | float = 1.0, name: str = "Jacobi operator") -> InfMatSpec:
    """Tridiagonal Hermitian matrix with ``a_jj = diagonal(j)`` and ``a_{j,j+1} = offdiagonal(j)`` (1-based)."""
    d = diagonal if callable(diagonal) else (lambda j, c=float(diagonal): c)
    b = offdiagonal if callable(offdiagonal) else (lambda j, c=float(offdiagonal): c)

    def columns(j):
        rows = [j - 1, j, j + 1] if j > 1 else [j, j + 1]
        vals = ([np.conj(b(j - 1))] if j > 1 else []) + [d(j), b(j)]
        return rows, vals

    return InfMatSpec(lambda j: j + 1, columns=columns, name=name)


def diagonal_operator(values: Sequence[float], name: str = "diagonal operator") -> InfMatSpec:
    """``diag(values[0], values[1], ..., 0, 0, ...)``."""
    vals = np.asarray(values, dtype=float)

    def columns(j):
        v = vals[j - 1] if j <= len(vals) else 0.0
        return ([j], [v]) if v != 0 else ([], [])

    return InfMatSpec(lambda j: j, columns=columns, name=name)


def free_jacobi_resolvent(z: complex) -> complex:
    """``<(J - z)^{-1} e_1, e_1>`` for the free Jacobi matrix (semicircle law on [-2, 2])."""
    z = complex(z)
    root = np.sqrt(z - 2) * np.sqrt(z + 2)
    return (-z + root) / 2


# unit vectors between a vertex of the first sub-lattice and its three neighbours
_DELTA = np.array([[0.0, 1.0], [math.sqrt(3) / 2, -0.5], [-math.sqrt(3) / 2, -0.5]])
_A1 = _DELTA[1] - _DELTA[0]
_A2 = _DELTA[2] - _DELTA[0]


@dataclass(frozen=True)
class GrapheneSpec:
    """Magnetic honeycomb Hamiltonian ``T_1 + T_2 + T_3`` (plus an optional defect potential)."""

    flux: float = 0.25
    radius: int = 60
    defect: bool = False

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("lattice radius must be at least 1")
        if not math.isfinite(self.flux):
            raise ValueError("flux must be finite")


def _hex_shell(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    same = np.sign(m) * np.sign(n) > 0
    return np.where(same, np.abs(m) + np.abs(n), np.maximum(np.abs(m), np.abs(n)))


def graphene_sites(radius: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cells ``(m, n)`` in hexagonal shells ``0..radius``, ordered by shell then angle.

    Returns ``(m, n, shell)`` for the cells; site ``2k`` is the first spinor
    component of cell ``k`` and site ``2k + 1`` the second.
    """
    r = np.arange(-radius, radius + 1)
    M, Nn = np.meshgrid(r, r, indexing="ij")
    M, Nn = M.ravel(), Nn.ravel()
    shell = _hex_shell(M, Nn)
    keep = shell <= radius
    M, Nn, shell = M[keep], Nn[keep], shell[keep]
    centre = np.outer(M, _A1) + np.outer(Nn, _A2) + _DELTA[0] / 2
    angle = np.round(np.mod(np.arctan2(centre[:, 1], centre[:, 0]), 2 * np.pi), 12)
    order = np.lexsort((Nn, M, angle, shell))
    return M[order], Nn[order], shell[order]


def vertex_positions(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Planar positions (unit edge length) of both spinor components, interleaved."""
    a = np.outer(m, _A1) + np.outer(n, _A2)
    out = np.empty((2 * len(m), 2))
    out[0::2] = a
    out[1::2] = a + _DELTA[0]
    return out


def defect_potential(x: np.ndarray) -> np.ndarray:
    """``cos(pi |x|) / (|x| + 1)^2`` at planar positions ``x``."""
    r = np.linalg.norm(np.atleast_2d(x), axis=1)
    return np.cos(np.pi * r) / (r + 1) ** 2


def build_graphene(spec: GrapheneSpec) -> InfMatSpec:
    """Sparse block of the magnetic graphene Hamiltonian in shell ordering.

    Hopping ``T_1`` joins the two components of a cell, ``T_2`` joins
    component 1 of ``(m, n)`` to component 2 of ``(m + 1, n)`` and ``T_3``
    joins component 1 of ``(m, n)`` to component 2 of ``(m, n + 1)`` with the
    Peierls phase ``exp(-2 pi i flux m)``.  Only columns whose neighbours are
    all enumerated (shells ``< radius``) are exposed.
    """
    m, n, shell = graphene_sites(spec.radius)
    index = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(m, n))}
    rows, cols, vals = [], [], []

    def hop(k1, k2, v):
        # component 1 of cell k1 <- component 2 of cell k2 with amplitude v
        i, j = 2 * k1, 2 * k2 + 1
        rows.extend([i, j])
        cols.extend([j, i])
        vals.extend([v, np.conj(v)])

    phase = np.exp(-2j * np.pi * spec.flux * m)
    for k, (a, b) in enumerate(zip(m.tolist(), n.tolist())):
        hop(k, k, 1.0)
        k2 = index.get((a + 1, b))
        if k2 is not None:
            hop(k, k2, 1.0)
        k3 = index.get((a, b + 1))
        if k3 is not None:
            hop(k, k3, phase[k])
    size = 2 * len(m)
    if spec.defect:
        V = defect_potential(vertex_positions(m, n))
        rows.extend(range(size))
        cols.extend(range(size))
        vals.extend(V.tolist())
    H = sparse.csc_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(size, size))
    H.sum_duplicates()
    # usable columns: all sites in shells < radius have complete neighbourhoods
    usable = int(2 * np.sum(shell < spec.radius))
    last = np.zeros(size, dtype=np.int64)
    nz_cols = np.repeat(np.arange(size), np.diff(H.indptr))
    np.maximum.at(last, nz_cols, H.indices + 1)
    F = np.maximum.accumulate(np.maximum(last, np.arange(1, size + 1)))[:usable]
    name = f"graphene flux={spec.flux}" + (" + defect" if spec.defect else "")
    return InfMatSpec(F, block=H[:, :usable], max_columns=usable, name=name)


def load_coordinate_list(path, support_path=None, name: str | None = None) -> InfMatSpec:
    """Read ``i j re im`` lines (1-based) and an optional ``F`` table (one value per column).

    Without a table, ``F`` is the running maximum of the last nonzero row in
    each column.
    """
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected four columns (i, j, re, im), got {data.shape[1]}")
    i, j = data[:, 0].astype(np.int64), data[:, 1].astype(np.int64)
    if i.min() < 1 or j.min() < 1:
        raise ValueError(f"{path}: indices are 1-based")
    ncols = int(j.max())
    if support_path is not None:
        F = np.loadtxt(support_path, ndmin=1).astype(np.int64)
        ncols = min(ncols, len(F))
    else:
        last = np.zeros(ncols, dtype=np.int64)
        np.maximum.at(last, j - 1, i)
        F = np.maximum.accumulate(np.maximum(last, np.arange(1, ncols + 1)))
    nrows = max(int(i.max()), int(F[:ncols].max()))
    A = sparse.csc_matrix((data[:, 2] + 1j * data[:, 3], (i - 1, j - 1)), shape=(nrows, max(ncols, int(j.max()))))
    return InfMatSpec(F[:ncols], block=A[:, :ncols], max_columns=ncols, name=name or str(path))


# ---------------------------------------------------------------------------
# Flux sweeps


@dataclass
class ButterflyTable:
    flux: np.ndarray
    x: np.ndarray
    density: np.ndarray
    converged: np.ndarray
    epsilon: float
    order: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("flux,x,density,converged\n")
            for a, phi in enumerate(self.flux):
                for b, x in enumerate(self.x):
                    fh.write(f"{phi:.17g},{x:.17g},{self.density[a, b]:.17g},{int(self.converged[a, b])}\n")


def butterfly_sweep(flux_values: Sequence[float], x_grid: Sequence[float], epsilon: float, kernel: RationalKernel,
                    cfg: AdaptiveConfig | None = None, radius: int = 60, defect: bool = False) -> ButterflyTable:
    """Clipped smoothed density of ``rho_{e_1}`` for each flux value (rows) on ``x_grid`` (columns).

    Non-converged cells are flagged and the sweep continues.
    """
    flux = np.asarray(flux_values, dtype=float)
    if np.any((flux < 0) | (flux > 1)):
        raise ValueError("flux values must lie in [0, 1]")
    xs = np.asarray(x_grid, dtype=float)
    dens = np.zeros((len(flux), len(xs)))
    conv = np.zeros((len(flux), len(xs)), dtype=bool)
    for a, phi in enumerate(flux):
        spec = build_graphene(GrapheneSpec(float(phi), radius, defect))
        e1 = np.zeros(1)
        e1[0] = 1
        sampler = LatticeSampler(spec, e1)
        for b, x in enumerate(xs):
            val, samples = smoothed_measure(sampler, kernel, float(x), epsilon, cfg, strict=False)
            dens[a, b] = max(val, 0.0)
            conv[a, b] = all(s.converged for s in samples)
    return ButterflyTable(flux, xs, dens, conv, float(epsilon), kernel.order)
