"""Rational convolution kernels of arbitrary order.

A kernel of order ``m`` is written in terms of ``m`` simple poles ``a_j`` in
the upper half-plane together with their conjugates,

    K(x) = 1/(2 pi i) * sum_j [alpha_j / (x - a_j) - conj(alpha_j) / (x - conj(a_j))]
         = (1/pi) * sum_j Im(alpha_j / (x - a_j)),

with residues ``alpha_j`` fixed by the moment conditions
``sum_j alpha_j a_j**k = delta_{k0}`` for ``k = 0..m-1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "KernelError",
    "PoleSet",
    "RationalKernel",
    "KernelDecayCertificate",
    "equispaced_poles",
    "solve_residues",
    "make_kernel",
    "evaluate_kernel",
    "analytic_moment",
    "laurent_moments",
    "kernel_moment",
    "decay_certificate",
    "kernel_to_json",
    "kernel_from_json",
]

MAX_ORDER = 12
COND_LIMIT = 1e12


class KernelError(ValueError):
    """Invalid kernel order, pole set or moment request."""


class ConditioningError(KernelError):
    def __init__(self, message: str, cond: float):
        super().__init__(message)
        self.cond = cond


@dataclass(frozen=True)
class PoleSet:
    """Distinct simple poles in the open upper half-plane."""

    poles: tuple[complex, ...]

    def __post_init__(self):
        poles = tuple(complex(a) for a in self.poles)
        object.__setattr__(self, "poles", poles)
        if not poles:
            raise KernelError("a pole set needs at least one pole")
        if any(not np.isfinite(a) for a in poles):
            raise KernelError("poles must be finite")
        if any(a.imag <= 0 for a in poles):
            raise KernelError("all poles must have strictly positive imaginary part")
        for i, a in enumerate(poles):
            for b in poles[i + 1:]:
                if a == b:
                    raise KernelError(f"repeated pole {a}; only simple poles are supported")

    @property
    def order(self) -> int:
        return len(self.poles)

    def as_array(self) -> np.ndarray:
        return np.array(self.poles, dtype=complex)


@dataclass(frozen=True)
class RationalKernel:
    pole_set: PoleSet
    residues: tuple[complex, ...] = field(default=())

    @property
    def order(self) -> int:
        return self.pole_set.order

    @property
    def poles(self) -> np.ndarray:
        return self.pole_set.as_array()

    @property
    def alphas(self) -> np.ndarray:
        return np.array(self.residues, dtype=complex)

    def __call__(self, x):
        return evaluate_kernel(self, x)


@dataclass(frozen=True)
class KernelDecayCertificate:
    constant: float
    sample_radius: float
    observed_max: float
    order: int


def equispaced_poles(m: int, max_order: int | None = MAX_ORDER) -> PoleSet:
    """Poles ``a_j = 2j/(m+1) - 1 + i`` for ``j = 1..m``."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise KernelError(f"kernel order must be a positive integer, got {m!r}")
    m = int(m)
    if max_order is not None and m > max_order:
        raise KernelError(f"kernel order {m} exceeds the supported maximum {max_order}")
    j = np.arange(1, m + 1)
    return PoleSet(tuple(2 * j / (m + 1) - 1 + 1j))


def _bjorck_pereyra_dual(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Solves sum_j x_j**k w_j = b_k, k = 0..n (Golub & Van Loan, Alg. 4.6.2).
    b = np.array(b, dtype=complex)
    n = len(x) - 1
    for k in range(n):
        for i in range(n, k, -1):
            b[i] -= x[k] * b[i - 1]
    for k in range(n - 1, -1, -1):
        for i in range(k + 1, n + 1):
            b[i] /= x[i] - x[i - k - 1]
        for i in range(k, n):
            b[i] -= b[i + 1]
    return b


def vandermonde(poles: np.ndarray) -> np.ndarray:
    m = len(poles)
    return poles[np.newaxis, :] ** np.arange(m)[:, np.newaxis]


def solve_residues(poles: PoleSet, cond_limit: float = COND_LIMIT) -> RationalKernel:
    """Residues making the rational kernel with these poles an ``m``-th order kernel."""
    a = poles.as_array()
    m = len(a)
    cond = np.linalg.cond(vandermonde(a))
    if not np.isfinite(cond) or cond > cond_limit:
        raise ConditioningError(
            f"Vandermonde system for {m} poles is too ill-conditioned (cond ~ {cond:.3e})", cond
        )
    rhs = np.zeros(m, dtype=complex)
    rhs[0] = 1.0
    alpha = _bjorck_pereyra_dual(a, rhs)
    return RationalKernel(poles, tuple(complex(v) for v in alpha))


def make_kernel(order: int = 2, pole_type: str = "equispaced", poles=None) -> RationalKernel:
    """Convenience constructor used by the CLI and the presets."""
    if pole_type == "equispaced":
        return solve_residues(equispaced_poles(order))
    if poles is None:
        raise KernelError(f"pole type {pole_type!r} needs an explicit pole list")
    return solve_residues(PoleSet(tuple(poles)))


def laurent_moments(kernel: RationalKernel, count: int) -> np.ndarray:
    """``M_n = sum_j alpha_j a_j**n`` for ``n = 0..count-1``.

    Uses the linear recurrence from the pole polynomial, so the values do
    not suffer from cancellation among large residues.
    """
    m = kernel.order
    c = np.poly(kernel.poles)  # monic, highest degree first
    M = np.zeros(max(count, m + 1), dtype=complex)
    M[0] = 1.0
    for n in range(m, len(M)):
        M[n] = -sum(c[i] * M[n - i] for i in range(1, m + 1))
    return M[:count]


def _laurent_switch(kernel: RationalKernel) -> float:
    return 2.0 * float(np.max(np.abs(kernel.poles)))


def evaluate_kernel(kernel: RationalKernel, x):
    """K(x) for real ``x`` (scalar or array).

    The residue sum is used near the origin; for ``|x|`` beyond twice the
    largest pole modulus the convergent Laurent expansion takes over.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty(x.shape)
    switch = _laurent_switch(kernel)
    near = np.abs(x) <= switch
    if near.any():
        xn = x[near]
        out[near] = (kernel.alphas / (xn[:, np.newaxis] - kernel.poles)).imag.sum(axis=1) / np.pi
    if (~near).any():
        xf = x[~near]
        nterms = kernel.order + 80
        im_m = laurent_moments(kernel, nterms).imag
        inv = 1.0 / xf
        acc = np.zeros_like(xf)
        for n in range(nterms - 1, kernel.order - 1, -1):
            acc = acc * inv + im_m[n]
        out[~near] = acc * inv ** (kernel.order + 1) / np.pi
    return float(out[0]) if scalar else out


def evaluate_kernel_two_sided(kernel: RationalKernel, x):
    """Complex value of the 2m-pole form; its imaginary part should vanish."""
    x = np.asarray(x, dtype=float)[..., np.newaxis]
    a, al = kernel.poles, kernel.alphas
    s = (al / (x - a)).sum(axis=-1) - (al.conj() / (x - a.conj())).sum(axis=-1)
    return s / (2j * np.pi)


def analytic_moment(kernel: RationalKernel, k: int) -> complex:
    """Residue identity ``sum_j alpha_j a_j**k``."""
    return complex(np.sum(kernel.alphas * kernel.poles**k))


def _tail(kernel: RationalKernel, k: int, radius: float) -> float:
    # int_{|y|>R} y^k K(y) dy from the Laurent series K(y) = sum_n Im(M_n)/(pi y^{n+1})
    im_m = laurent_moments(kernel, kernel.order + 120).imag
    total = 0.0
    for n in range(kernel.order, len(im_m)):
        if (k - n - 1) % 2 == 0:
            total += 2 * im_m[n] / np.pi * radius ** (k - n) / (n - k)
    return total


def kernel_moment(kernel: RationalKernel, k: int, quadrature_radius: float = 1e6) -> float:
    """Numerical ``int K(y) y^k dy`` over ``[-R, R]`` plus the analytic tail beyond ``R``."""
    if k < 0 or int(k) != k:
        raise KernelError("moment index must be a nonnegative integer")
    if k >= kernel.order:
        raise KernelError(f"moment {k} is not defined for an order-{kernel.order} kernel")
    R = float(quadrature_radius)
    if R <= 2 * np.max(np.abs(kernel.poles)):
        raise KernelError("quadrature radius must exceed twice the largest pole modulus")

    def g(y):
        return evaluate_kernel(kernel, y) * y**k

    inner = min(20.0, R)
    opts = dict(limit=400, epsabs=1e-15, epsrel=1e-14)
    total = integrate.quad(g, -inner, inner, points=[0.0], **opts)[0]
    if R > inner:
        # log-substitution y = +-exp(t) keeps the slowly decaying tails well sampled
        def h(t):
            y = np.exp(t)
            return (g(y) + g(-y)) * y

        total += integrate.quad(h, np.log(inner), np.log(R), **opts)[0]
    return total + _tail(kernel, k, R)


def decay_certificate(kernel: RationalKernel, sample_radius: float = 1e6,
                      n_samples: int = 10000) -> KernelDecayCertificate:
    """Observed sup of ``|K(x)| (1+|x|)^{m+1}`` on a symmetric log grid.

    This is a lower bound for the true decay constant, used as the
    ``C_K`` in off-spectrum tests.
    """
    if sample_radius <= 0:
        raise KernelError("sample radius must be positive")
    half = np.geomspace(1e-6, sample_radius, max(n_samples // 2, 2))
    x = np.concatenate([-half[::-1], [0.0], half])
    vals = np.abs(evaluate_kernel(kernel, x)) * (1 + np.abs(x)) ** (kernel.order + 1)
    observed = float(vals.max())
    return KernelDecayCertificate(observed, float(sample_radius), observed, kernel.order)


def kernel_to_json(kernel: RationalKernel) -> str:
    rec = {
        "order": kernel.order,
        "poles": [[a.real, a.imag] for a in kernel.pole_set.poles],
        "residues": [[a.real, a.imag] for a in kernel.residues],
    }
    return json.dumps(rec)


def kernel_from_json(text: str) -> RationalKernel:
    """Rebuild a kernel from its JSON record; residues are re-solved and checked."""
    rec = json.loads(text)
    poles = PoleSet(tuple(complex(re, im) for re, im in rec["poles"]))
    if len(poles.poles) != int(rec.get("order", len(poles.poles))):
        raise KernelError("order does not match the number of poles")
    kernel = solve_residues(poles)
    if "residues" in rec:
        stored = np.array([complex(re, im) for re, im in rec["residues"]])
        if stored.shape != kernel.alphas.shape or not np.allclose(stored, kernel.alphas, rtol=1e-10, atol=1e-12):
            raise KernelError("stored residues do not satisfy the moment conditions for these poles")
    return kernel
