import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as C
from scipy import sparse

from specmeasure.chebyshev import (
    AlmostBandedSolver,
    Banded,
    adaptive_coeffs,
    chebpts,
    chebpts1,
    chop_length,
    clenshaw_curtis,
    coeffs2vals,
    convert_T_to,
    diff_T_to_C,
    interleave,
    multiplication_cheb,
    multiplication_cheb_banded,
    multiplication_T,
    multiplication_T_banded,
    vals2coeffs,
    vals2coeffs1,
)

coeff_lists = st.lists(st.floats(-1, 1), min_size=1, max_size=8)


def test_points_and_weights():
    x, w = clenshaw_curtis(17)
    assert np.all(np.diff(x) > 0)
    assert x[0] == -1 and x[-1] == 1
    for k in range(16):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(np.dot(w, x**k) - exact) < 1e-14
    x, w = clenshaw_curtis(9, 0.0, 3.0)
    assert abs(np.dot(w, x**2) - 9.0) < 1e-13
    with pytest.raises(ValueError):
        clenshaw_curtis(1)


@given(coeff_lists)
def test_coefficient_transforms_round_trip(c):
    c = np.r_[c, np.zeros(3)]
    vals = coeffs2vals(c)
    assert np.allclose(vals, C.chebval(chebpts(len(c)), c), atol=1e-14)
    assert np.allclose(vals2coeffs(vals), c, atol=1e-14)


def test_first_kind_transform():
    c = np.array([0.3, -1.0, 0.25, 0.5])
    assert np.allclose(vals2coeffs1(C.chebval(chebpts1(8), c))[:4], c, atol=1e-15)


def test_chop_and_adaptive():
    c = adaptive_coeffs(lambda x: np.exp(x))
    assert 12 <= len(c) <= 20
    assert abs(C.chebval(0.3, c) - np.exp(0.3)) < 1e-14
    assert chop_length(np.zeros(5), 1e-10) == 1
    assert chop_length(np.array([1.0, 1e-3, 1e-12, 1e-16]), 1e-10) == 2


@given(coeff_lists, coeff_lists)
def test_multiplication_T_matches_chebmul(a, u):
    n = len(a) + len(u) + 2
    M = multiplication_T(np.array(a), n)
    uu = np.r_[u, np.zeros(n - len(u))]
    ref = C.chebmul(a, u)
    assert np.allclose(M @ uu, np.r_[ref, np.zeros(n - len(ref))], atol=1e-14)
    assert np.allclose(multiplication_T_banded(np.array(a), n).tosparse().toarray(), M.toarray(), atol=1e-15)


@pytest.mark.parametrize("lam", [1, 2, 3])
def test_ultraspherical_multiplication_commutes_with_conversion(lam):
    a = np.array([0.5, -0.2, 0.1, 0.05])
    n = 30
    S = convert_T_to(n, lam)
    lhs = (multiplication_cheb(a, n, lam) @ S).toarray()[: n - 6, : n - 6]
    rhs = (S @ multiplication_T(a, n)).toarray()[: n - 6, : n - 6]
    assert np.allclose(lhs, rhs, atol=1e-14)
    band = multiplication_cheb_banded(a, n, lam).tosparse().toarray()
    assert np.allclose(band, multiplication_cheb(a, n, lam).toarray(), atol=1e-14)


def test_derivative_to_ultraspherical():
    c = np.array([1.0, 2.0, -0.5, 0.25, 0.125])
    n = len(c)
    d2 = diff_T_to_C(n, 2) @ c
    ref = convert_T_to(n, 2) @ np.r_[C.chebder(c, 2), np.zeros(2)]
    assert np.allclose(d2, ref, atol=1e-13)


@given(st.integers(5, 30), st.integers(-3, 0), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_banded_algebra_matches_dense(n, lo, width, seed):
    rng = np.random.default_rng(seed)
    A = Banded(rng.standard_normal((width, n)), lo)._mask()
    B = Banded(rng.standard_normal((width + 1, n)), lo - 1)._mask()
    Ad, Bd = A.tosparse().toarray(), B.tosparse().toarray()
    assert np.allclose((A @ B).tosparse().toarray(), Ad @ Bd)
    assert np.allclose((A + B).tosparse().toarray(), Ad + Bd)
    assert np.allclose((A - 2.0 * B).tosparse().toarray(), Ad - 2 * Bd)
    u = rng.standard_normal(n)
    assert np.allclose(A.matvec(u), Ad @ u)
    assert np.allclose(Banded.from_sparse(sparse.csr_matrix(Ad)).tosparse().toarray(), Ad)


def test_interleave_orders_unknowns():
    rng = np.random.default_rng(1)
    n = 6
    blocks = [[Banded(rng.standard_normal((3, n)), -1)._mask() for _ in range(2)] for _ in range(2)]
    dense = np.block([[B.tosparse().toarray() for B in row] for row in blocks])
    perm = np.arange(2 * n).reshape(2, n).T.ravel()
    assert np.allclose(interleave(blocks).tosparse().toarray(), dense[np.ix_(perm, perm)])


def almost_banded(n, k, rng):
    A = sparse.diags([rng.standard_normal(n - 1), 4 + rng.standard_normal(n), rng.standard_normal(n - 2)],
                     [-1, 0, 2], shape=(n, n)).toarray().astype(complex)
    A[:k] = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
    return A


@pytest.mark.parametrize("k", [1, 2, 4])
def test_almost_banded_solver(k):
    rng = np.random.default_rng(k)
    n = 60
    A = almost_banded(n, k, rng)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    ref = np.linalg.solve(A, b)
    x = AlmostBandedSolver(sparse.csr_matrix(A), k).solve(b)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)
    y = AlmostBandedSolver.from_banded(A[:k], Banded.from_sparse(_body(A, k))).solve(b)
    assert np.linalg.norm(y - ref) <= 1e-10 * np.linalg.norm(ref)


def _body(A, k):
    # rows k.. of A as a square banded matrix whose row i is row i + k of A
    n = A.shape[0]
    S = np.zeros((n, n), dtype=complex)
    S[: n - k] = A[k:]
    return sparse.csr_matrix(S)
