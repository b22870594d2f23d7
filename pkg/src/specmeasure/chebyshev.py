"""Chebyshev and ultraspherical helpers shared by the operator backends."""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.fft import dct
from scipy.linalg import lapack


def chebpts(n: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """Chebyshev points of the second kind on ``[a, b]``, increasing."""
    if n == 1:
        return np.array([(a + b) / 2])
    x = np.sin(np.pi * np.arange(-(n - 1), n, 2) / (2 * (n - 1)))
    return (b - a) / 2 * x + (a + b) / 2


def clenshaw_curtis(n: int, a: float = -1.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes and weights with ``n`` points on ``[a, b]`` (Waldvogel's FFT formula)."""
    if n < 2:
        raise ValueError("Clenshaw-Curtis needs at least two points")
    N = n - 1
    c = np.zeros(N + 1)
    k = np.arange(0, N + 1, 2)
    c[k] = 2.0 / (1.0 - k.astype(float) ** 2)
    v = np.real(np.fft.ifft(np.concatenate([c, c[N - 1:0:-1]])))
    w = np.empty(n)
    w[0] = w[N] = v[0]
    w[1:N] = 2 * v[1:N]
    # symmetric weights, so the increasing-node order needs no flip
    return chebpts(n, a, b), (b - a) / 2 * w


def vals2coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev T coefficients from samples at ``chebpts(n)`` (increasing order)."""
    values = np.asarray(values)
    n = len(values)
    if n == 1:
        return values.copy()
    v = values[::-1]
    if np.iscomplexobj(v):
        c = dct(v.real, type=1) + 1j * dct(v.imag, type=1)
    else:
        c = dct(v, type=1)
    c = c / (n - 1)
    c[0] /= 2
    c[-1] /= 2
    return c


def coeffs2vals(coeffs: np.ndarray) -> np.ndarray:
    """Samples at ``chebpts(n)`` (increasing order) from Chebyshev T coefficients."""
    c = np.array(coeffs, dtype=np.result_type(coeffs, float))
    n = len(c)
    if n == 1:
        return c.copy()
    c[1:-1] /= 2
    if np.iscomplexobj(c):
        v = dct(c.real, type=1) + 1j * dct(c.imag, type=1)
    else:
        v = dct(c, type=1)
    return v[::-1]


def chop_length(coeffs: np.ndarray, tol: float) -> int:
    """Number of leading coefficients needed to represent a function to ``tol``.

    A plateau-free simplification of Chebfun's chopping rule: the length is
    the last index whose envelope exceeds ``tol`` times the maximum.
    """
    a = np.abs(np.asarray(coeffs))
    if a.size == 0 or a.max() == 0:
        return 1
    env = np.maximum.accumulate(a[::-1])[::-1] / a.max()
    above = np.nonzero(env > tol)[0]
    return int(above[-1] + 1) if above.size else 1


def adaptive_coeffs(fun, tol: float = 1e-14, n0: int = 17, nmax: int = 2**16) -> np.ndarray:
    """Chebyshev coefficients of ``fun`` on [-1, 1], refined until the tail is below ``tol``."""
    n = n0
    while True:
        x = chebpts(n)
        c = vals2coeffs(fun(x))
        keep = chop_length(c, tol)
        if keep < 0.8 * n or n >= nmax:
            return c[:keep]
        n = 2 * (n - 1) + 1


def chebpts1(n: int) -> np.ndarray:
    """Chebyshev points of the first kind on [-1, 1], increasing (endpoints excluded)."""
    return -np.cos(np.pi * (np.arange(n) + 0.5) / n)


def vals2coeffs1(values: np.ndarray) -> np.ndarray:
    """Chebyshev T coefficients from samples at ``chebpts1(n)``."""
    v = np.asarray(values)[::-1]
    if np.iscomplexobj(v):
        c = dct(v.real, type=2) + 1j * dct(v.imag, type=2)
    else:
        c = dct(v, type=2)
    c = c / len(v)
    c[0] /= 2
    return c


def adaptive_coeffs1(fun, tol: float = 1e-14, n0: int = 16, nmax: int = 2**15) -> np.ndarray:
    """Like :func:`adaptive_coeffs` but samples only interior (first-kind) points.

    Useful for coefficients that are singular or undefined at the endpoints of
    a mapped infinite domain but have finite limits there.
    """
    n = n0
    while True:
        c = vals2coeffs1(fun(chebpts1(n)))
        if not np.all(np.isfinite(c)):
            raise ValueError("function is not finite at Chebyshev points")
        keep = chop_length(c, tol)
        if keep < 0.8 * n or n >= nmax:
            return c[:keep]
        n *= 2


# ---------------------------------------------------------------------------
# Ultraspherical spectral method operators.


def diff_T_to_C(n: int, k: int) -> sparse.csr_matrix:
    """k-th derivative mapping T coefficients to C^(k) coefficients (n x n)."""
    if k == 0:
        return sparse.identity(n, format="csr")
    from math import factorial

    scale = 2 ** (k - 1) * factorial(k - 1)
    diag = scale * np.arange(k, n, dtype=float)
    return sparse.diags(diag, k, shape=(n, n), format="csr")


def convert_T_to_C1(n: int) -> sparse.csr_matrix:
    d0 = np.full(n, 0.5)
    d0[0] = 1.0
    return sparse.diags([d0, -0.5 * np.ones(n - 2)], [0, 2], shape=(n, n), format="csr")


def convert_C(n: int, lam: int) -> sparse.csr_matrix:
    """Conversion C^(lam) -> C^(lam+1)."""
    k = np.arange(n, dtype=float)
    return sparse.diags([lam / (k + lam), -lam / (k[2:] + lam)], [0, 2], shape=(n, n), format="csr")


def convert_T_to(n: int, lam: int) -> sparse.csr_matrix:
    if lam == 0:
        return sparse.identity(n, format="csr")
    S = convert_T_to_C1(n)
    for mu in range(1, lam):
        S = convert_C(n, mu) @ S
    return S.tocsr()


def jacobi_matrix(n: int, lam: int) -> sparse.csr_matrix:
    """Multiplication by ``s`` in the C^(lam) basis (T basis for lam = 0)."""
    k = np.arange(n, dtype=float)
    if lam == 0:
        sub = np.full(n - 1, 0.5)
        sub[0] = 1.0
        sup = np.full(n - 1, 0.5)
        return sparse.diags([sub, sup], [-1, 1], shape=(n, n), format="csr")
    sub = (k[:-1] + 1) / (2 * (k[:-1] + lam))
    sup = (k[1:] + 2 * lam - 1) / (2 * (k[1:] + lam))
    return sparse.diags([sub, sup], [-1, 1], shape=(n, n), format="csr")


def multiplication_poly(n: int, lam: int, monomial: np.ndarray) -> sparse.csr_matrix:
    """Multiplication by the polynomial ``sum_k monomial[k] s**k`` in the C^(lam) basis.

    The product is formed on a padded space so the truncation does not
    corrupt the last rows.
    """
    monomial = np.trim_zeros(np.asarray(monomial, dtype=complex), "b")
    deg = max(len(monomial) - 1, 0)
    big = n + deg + 1
    J = jacobi_matrix(big, lam)
    M = sparse.csr_matrix((big, big), dtype=complex)
    for c in monomial[::-1]:
        M = (J @ M + c * sparse.identity(big, format="csr")).tocsr()
    if not monomial.size:
        M = sparse.csr_matrix((big, big), dtype=complex)
    return M[:n, :n].tocsr()


def multiplication_T(coeffs: np.ndarray, n: int) -> sparse.csr_matrix:
    """Multiplication by ``sum_k coeffs[k] T_k`` in the T basis (Toeplitz + Hankel)."""
    a = np.asarray(coeffs, dtype=complex)[:n]
    m = len(a)
    offsets = list(range(-(m - 1), m))
    toeplitz = sparse.diags([np.full(n - abs(d), 0.5 * a[abs(d)]) for d in offsets], offsets,
                            shape=(n, n), format="csr")
    # Hankel part a_{j+k}/2 for rows j >= 1, plus the diagonal correction a_0/2
    j, k = np.nonzero(np.add.outer(np.arange(m), np.arange(m)) < m)
    keep = j >= 1
    rows = np.r_[j[keep], np.arange(1, n), 0]
    cols = np.r_[k[keep], np.arange(1, n), 0]
    vals = np.r_[0.5 * a[j[keep] + k[keep]], np.full(n - 1, 0.5 * a[0]), 0.5 * a[0]]
    return (toeplitz + sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))).tocsr()


def multiplication_cheb(coeffs: np.ndarray, n: int, lam: int) -> sparse.csr_matrix:
    """Multiplication by ``sum_k coeffs[k] T_k(s)`` in the C^(lam) basis.

    Clenshaw's recurrence evaluated with the Jacobi operator of the basis.
    """
    c = np.asarray(coeffs, dtype=complex)
    if lam == 0:
        return multiplication_T(c, n)
    big = n + len(c) + 1
    J = jacobi_matrix(big, lam)
    I = sparse.identity(big, format="csr", dtype=complex)
    b1 = sparse.csr_matrix((big, big), dtype=complex)
    b2 = sparse.csr_matrix((big, big), dtype=complex)
    for k in range(len(c) - 1, 0, -1):
        b1, b2 = (c[k] * I + 2 * (J @ b1) - b2).tocsr(), b1
    M = c[0] * I + J @ b1 - b2 if len(c) else b1
    return sparse.csr_matrix(M)[:n, :n].tocsr()


class Banded:
    """Square banded matrix in diagonal storage: ``data[k, i] = A[i, i + lo + k]``.

    Products and sums stay in this layout, which avoids the index bookkeeping
    of general sparse formats when long coefficient expansions widen the band.
    """

    def __init__(self, data: np.ndarray, lo: int):
        self.data = np.asarray(data)
        self.lo = int(lo)
        self.n = self.data.shape[1]

    @property
    def hi(self) -> int:
        return self.lo + self.data.shape[0] - 1

    @classmethod
    def from_sparse(cls, A) -> "Banded":
        A = sparse.coo_matrix(A)
        n = A.shape[0]
        if A.nnz == 0:
            return cls(np.zeros((1, n), dtype=A.dtype), 0)
        off = A.col - A.row
        lo = int(off.min())
        data = np.zeros((int(off.max()) - lo + 1, n), dtype=A.dtype)
        np.add.at(data, (off - lo, A.row), A.data)
        return cls(data, lo)

    @classmethod
    def identity(cls, n: int) -> "Banded":
        return cls(np.ones((1, n)), 0)

    def _shifted(self, shift: int) -> np.ndarray:
        # rows of data read at column index i + shift, zero outside [0, n)
        out = np.zeros_like(self.data)
        if shift >= 0:
            out[:, : self.n - shift] = self.data[:, shift:]
        else:
            out[:, -shift:] = self.data[:, : self.n + shift]
        return out

    def __matmul__(self, other: "Banded") -> "Banded":
        # (AB)[i, i+p+q] = A[i, i+p] B[i+p, i+p+q]
        da, db = self.data.shape[0], other.data.shape[0]
        out = np.zeros((da + db - 1, self.n), dtype=np.result_type(self.data, other.data))
        for a in range(da):
            p = self.lo + a
            out[a: a + db] += self.data[a] * other._shifted(p)
        res = Banded(out, self.lo + other.lo)
        return res._mask()

    def _mask(self) -> "Banded":
        # clear entries that fall outside the n x n matrix
        i = np.arange(self.n)
        for k in range(self.data.shape[0]):
            j = i + self.lo + k
            self.data[k, (j < 0) | (j >= self.n)] = 0
        return self

    def __add__(self, other: "Banded") -> "Banded":
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        out = np.zeros((hi - lo + 1, self.n), dtype=np.result_type(self.data, other.data))
        out[self.lo - lo: self.hi - lo + 1] += self.data
        out[other.lo - lo: other.hi - lo + 1] += other.data
        return Banded(out, lo)

    def __neg__(self) -> "Banded":
        return Banded(-self.data, self.lo)

    def __sub__(self, other: "Banded") -> "Banded":
        return self + (-other)

    def __rmul__(self, c) -> "Banded":
        return Banded(c * self.data, self.lo)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        out = np.zeros(self.n, dtype=np.result_type(self.data, u))
        for k in range(self.data.shape[0]):
            off = self.lo + k
            if off >= 0:
                out[: self.n - off] += self.data[k, : self.n - off] * u[off:]
            else:
                out[-off:] += self.data[k, -off:] * u[: self.n + off]
        return out

    def tosparse(self) -> sparse.csr_matrix:
        offs = [o for o in range(self.lo, self.hi + 1) if abs(o) < self.n]
        diags = [self.data[o - self.lo, max(0, -o): self.n - max(0, o)] for o in offs]
        if not offs:
            return sparse.csr_matrix((self.n, self.n), dtype=self.data.dtype)
        return sparse.diags(diags, offs, shape=(self.n, self.n), format="csr")


def multiplication_T_banded(coeffs: np.ndarray, n: int) -> Banded:
    """:func:`multiplication_T` in :class:`Banded` storage."""
    a = np.asarray(coeffs)[:n]
    m = len(a)
    data = np.zeros((2 * m - 1, n), dtype=np.result_type(a, float))
    data[:] = 0.5 * np.r_[a[::-1], a[1:]][:, None]
    data[m - 1, 1:] += 0.5 * a[0]
    # Hankel part a_{i+j}/2 for rows 1 <= i, i + j < m
    for i in range(1, m):
        j = np.arange(0, m - i)
        data[j - i + m - 1, i] += 0.5 * a[i + j]
    data[m - 1:, 0] = np.r_[a[0], 0.5 * a[1:]]
    return Banded(data, -(m - 1))._mask()


def truncate_banded(A: Banded, n: int) -> Banded:
    """Leading ``n x n`` block."""
    return Banded(A.data[:, :n].copy(), A.lo)._mask()


def multiplication_cheb_banded(coeffs: np.ndarray, n: int, lam: int) -> Banded:
    """:func:`multiplication_cheb` in :class:`Banded` storage."""
    c = np.asarray(coeffs)
    if lam == 0:
        return multiplication_T_banded(c, n)
    big = n + len(c) + 1
    J = Banded.from_sparse(jacobi_matrix(big, lam))
    I = Banded.identity(big)
    zero = Banded(np.zeros((1, big)), 0)
    b1, b2 = zero, zero
    for k in range(len(c) - 1, 0, -1):
        b1, b2 = c[k] * I + 2 * (J @ b1) - b2, b1
    M = c[0] * I + J @ b1 - b2 if len(c) else zero
    return truncate_banded(M, n)


def interleave(blocks: list[list[Banded]]) -> Banded:
    """Banded matrix of a block system with unknowns ordered ``(u1_0, u2_0, u1_1, ...)``."""
    nb = len(blocks)
    n = blocks[0][0].n
    lo = min(nb * B.lo - (nb - 1) for row in blocks for B in row)
    hi = max(nb * B.hi + (nb - 1) for row in blocks for B in row)
    dtype = np.result_type(*[B.data for row in blocks for B in row])
    data = np.zeros((hi - lo + 1, nb * n), dtype=dtype)
    for a, row in enumerate(blocks):
        for b, B in enumerate(row):
            for k in range(B.data.shape[0]):
                off = nb * (B.lo + k) + b - a
                data[off - lo, a::nb] += B.data[k]
    return Banded(data, lo)._mask()


class AlmostBandedSolver:
    """Solve ``A x = b`` where ``A`` is banded apart from its first ``k`` (boundary) rows.

    The boundary rows are truncated to the band, the truncated matrix is
    factored with LAPACK's banded LU, and the discarded part is restored by a
    rank-``k`` Woodbury correction.  Cost is ``O(n w^2)`` for bandwidth ``w``.
    """

    def __init__(self, A, k: int):
        A = sparse.csr_matrix(A, dtype=complex)
        n = A.shape[0]
        body = A[k:].tocoo()
        offs = body.col - (body.row + k)
        lower = int(max(0, -offs.min())) if offs.size else 0
        upper = int(max(0, offs.max())) if offs.size else 0
        upper = max(upper, k)
        lower = max(lower, k - 1)  # boundary rows reach back to column 0
        top = A[:k].toarray()
        trunc = np.zeros_like(top)
        for i in range(k):
            trunc[i, : i + upper + 1] = top[i, : i + upper + 1]
        self.V = top - trunc
        A0 = sparse.vstack([sparse.csr_matrix(trunc), A[k:]]).tocoo()
        ab = np.zeros((2 * lower + upper + 1, n), dtype=complex)
        ab[lower + upper + A0.row - A0.col, A0.col] = A0.data
        self._factor(ab, lower, upper, n, k)

    @classmethod
    def from_banded(cls, top: np.ndarray, body: Banded) -> "AlmostBandedSolver":
        """Matrix whose first ``k`` rows are ``top`` and whose row ``i >= k`` is row ``i - k`` of ``body``."""
        self = cls.__new__(cls)
        top = np.asarray(top, dtype=complex)
        k, n = top.shape
        lower = max(0, k - body.lo, k - 1)
        upper = max(0, body.hi - k, k)
        ab = np.zeros((2 * lower + upper + 1, n), dtype=complex)
        rows = np.arange(k, n)
        for d in range(body.data.shape[0]):
            off = body.lo + d - k  # column minus final row index
            cols = rows + off
            ok = (cols >= 0) & (cols < n)
            ab[lower + upper - off, cols[ok]] = body.data[d, rows[ok] - k]
        trunc = np.zeros_like(top)
        for i in range(k):
            trunc[i, : i + upper + 1] = top[i, : i + upper + 1]
            cols = np.arange(0, min(n, i + upper + 1))
            ab[lower + upper + i - cols, cols] = top[i, cols]
        self.V = top - trunc
        self._factor(ab, lower, upper, n, k)
        return self

    def _factor(self, ab, lower, upper, n, k):
        lu, piv, info = lapack.zgbtrf(ab, lower, upper)
        if info > 0:
            raise np.linalg.LinAlgError("banded part is singular")
        self.lu, self.piv, self.l, self.u, self.n, self.k = lu, piv, lower, upper, n, k
        U = np.zeros((n, k), dtype=complex)
        U[np.arange(k), np.arange(k)] = 1
        self.Z = self._banded(U)
        self.cap = np.eye(k) + self.V @ self.Z

    def _banded(self, b):
        x, info = lapack.zgbtrs(self.lu, self.l, self.u, b, self.piv)
        return x

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = self._banded(np.asarray(b, dtype=complex))
        return y - self.Z @ np.linalg.solve(self.cap, self.V @ y)
