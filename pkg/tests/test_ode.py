import math

import numpy as np
import pytest
from scipy.integrate import quad

from specmeasure import ode
from specmeasure.core import AdaptiveConfig, smoothed_measure
from specmeasure.kernel import make_kernel
from specmeasure.ode import (
    AssemblyError,
    DiffOpSpec,
    NonSelfAdjointWarning,
    ODESampler,
    RadialSchrodingerSpec,
    assemble_shifted_ode,
    beam_f,
    beam_operator,
    coulomb_dirac,
    dirac_eigenvalue_oracle,
    even_line_resolvent,
    map_circle_to_line,
    map_line_to_circle,
    ode_resolvent_sample,
    schrodinger_f,
    schrodinger_operator,
)

LAPLACIAN = DiffOpSpec((0.0, 0.0, -1.0), "real_line", 10.0, "-u''")


def sech_f(x):
    return 1 / np.cosh(np.asarray(x, dtype=float)) / math.sqrt(2)


def sech_spectral_weight(k):
    """``|hat f(k)|^2 / (2 pi)`` for ``f = sech / sqrt 2``, using ``hat sech(k) = pi sech(pi k / 2)``."""
    e = np.exp(-np.pi * abs(k))
    return 0.5 * np.pi**2 * 4 * e / (1 + e) ** 2 / (2 * np.pi)


def laplacian_oracle(z):
    """``<(-d^2/dx^2 - z)^{-1} f, f>`` as a Fourier integral."""
    g = lambda k, part: part(sech_spectral_weight(k) / (k * k - z))  # noqa: E731
    opts = dict(epsabs=0, epsrel=1e-13, limit=400, points=[0.0])
    re = quad(g, -40, 40, args=(np.real,), **opts)[0]
    im = quad(g, -40, 40, args=(np.imag,), **opts)[0]
    return re + 1j * im


def hydrogen_ground_f(r):
    r = np.asarray(r, dtype=float)
    return r * np.exp(-r / 2) / math.sqrt(2)


def dirac_ground_f(r):
    """Normalized ground state of the Coulomb Dirac operator with gamma = -0.8, kappa = -1 (eigenvalue 0.6)."""
    r = np.asarray(r, dtype=float)
    C = 1 / math.sqrt(1.25 * math.gamma(2.2) / 1.6**2.2)
    v = C * r**0.6 * np.exp(-0.8 * r)
    return v, -0.5 * v


# maps


def test_map_examples():
    assert map_circle_to_line(0.0) == 0.0
    assert abs(map_circle_to_line(np.pi / 2) - 10.0) < 1e-13
    assert abs(complex(10j * (1 - 1j) / (1 + 1j)) - 10.0) < 1e-14
    assert map_circle_to_line(np.pi) == np.inf
    assert map_circle_to_line(-np.pi) == -np.inf
    assert map_line_to_circle(np.inf) == np.pi
    for x in [3.7, -250.0, 1e-3]:
        assert abs(map_circle_to_line(map_line_to_circle(x)) - x) <= 1e-13 * max(1.0, abs(x))
    assert abs(map_circle_to_line(np.pi / 2, scale=100.0) - 100.0) < 1e-12


def test_chain_rule_on_mapped_circle():
    fl = ode._FourierLine(DiffOpSpec((0.0, 1.0), "real_line", 10.0, "d/dx"), 1025)
    g = lambda x: 1 / np.cosh(x)  # noqa: E731
    dg = lambda x: -np.tanh(x) / np.cosh(x)  # noqa: E731
    assert np.max(np.abs(fl.apply(fl.project(g), 0) - fl.project(dg))) < 1e-10


# specs


def test_spec_validation():
    with pytest.raises(ValueError):
        DiffOpSpec((0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        DiffOpSpec((0.0, 1.0), domain="half_line")
    with pytest.raises(ValueError):
        DiffOpSpec((0.0, -1.0), map_scale=0)
    with pytest.raises(ValueError):
        RadialSchrodingerSpec(ell=-1)
    with pytest.raises(ValueError):
        coulomb_dirac(-0.9)


def test_nonfinite_coefficient_is_named():
    spec = DiffOpSpec((lambda x: np.log(x), 0.0, -1.0), "real_line", 10.0, "log potential")
    with pytest.raises(AssemblyError, match="c_0"):
        assemble_shifted_ode(spec, 1j, 65)


def test_real_shift_rejected():
    with pytest.raises(ValueError):
        ode_resolvent_sample(LAPLACIAN, sech_f, 1.0)


# real line


@pytest.mark.parametrize("z", [2 + 1j, 1j, -1 + 0.3j])
def test_laplacian_matches_fourier_oracle(z):
    s = ode_resolvent_sample(LAPLACIAN, sech_f, z, AdaptiveConfig(rel_tol=1e-12))
    assert s.converged
    assert abs(s.value - laplacian_oracle(z)) <= 1e-10 * abs(s.value)


def test_residual_of_converged_sample():
    for spec, f, z in [(LAPLACIAN, sech_f, 1j), (schrodinger_operator(), schrodinger_f, 0.3 + 0.1j)]:
        s = ode_resolvent_sample(spec, f, z)
        disc = assemble_shifted_ode(spec, z, s.discretization_size, f)
        assert disc.residual(disc.solve()) <= 1e-9


def test_refinement_history_is_cauchy_at_acceptance():
    s = ode_resolvent_sample(schrodinger_operator(), schrodinger_f, 0.3 + 0.05j)
    diffs = [abs(b[1] - a[1]) for a, b in zip(s.history, s.history[1:])]
    assert s.converged and len(diffs) >= 2
    assert diffs[-1] < diffs[-2]


def test_conjugate_symmetry():
    S = ODESampler(schrodinger_operator(), schrodinger_f)
    for z in [0.3 + 0.1j, 1.5 + 0.02j]:
        a, b = S.sample(z).value, S.sample(z.conjugate()).value
        assert abs(b - np.conj(a)) <= 1e-12 * abs(a)


def test_underresolved_sample_is_flagged():
    s = ode_resolvent_sample(schrodinger_operator(), schrodinger_f, 0.3 + 0.001j, AdaptiveConfig(disc_max=256))
    assert not s.converged


def test_self_adjoint_warning():
    with pytest.warns(NonSelfAdjointWarning):
        ODESampler(DiffOpSpec((0.0, lambda x: x, -1.0), "real_line", 10.0, "-u'' + x u'"), sech_f)
    assert ode.check_self_adjoint(schrodinger_operator()) < 1e-8


def test_beam_below_spectrum_vanishes():
    S = ODESampler(beam_operator(0.0), beam_f)
    vals = [smoothed_measure(S, make_kernel(2), -1.0, eps)[0] for eps in (0.1, 0.05, 0.025)]
    assert all(0 < v < 1e-3 for v in vals)
    assert vals[0] > vals[1] > vals[2]


def test_shooting_oracle_on_free_line():
    # Im <R(lam + i0) f, f> = pi * density, and the density of -d^2/dx^2 at lam is
    # sum over k = +-sqrt(lam) of |hat f(k)|^2 / (2 pi) / (2 |k|)
    lam = 2.0
    v = even_line_resolvent(lambda x: 0.0, sech_f, lam, X=60.0)
    k = math.sqrt(lam)
    density = 2 * sech_spectral_weight(k) / (2 * k)
    assert abs(v.imag - np.pi * density) < 1e-9


# half line


@pytest.mark.parametrize("z", [0.5j, -0.25 + 0.01j, 1 + 0.1j])
def test_hydrogen_ground_state(z):
    spec = RadialSchrodingerSpec(0.0, -1.0, 0, 10.0, "hydrogen")
    s = ode_resolvent_sample(spec, hydrogen_ground_f, z)
    ref = 1 / (-0.25 - z)
    assert s.converged
    assert abs(s.value - ref) <= 1e-12 * abs(ref)


def test_half_line_system_is_banded():
    spec = RadialSchrodingerSpec(0.0, -1.0, 2, 10.0, "hydrogen l=2")
    widths = {n: assemble_shifted_ode(spec, 1j, n).info for n in (64, 256, 1024)}
    assert len({(w["lower"], w["upper"]) for w in widths.values()}) == 1
    assert widths[64]["lower"] + widths[64]["upper"] <= 2 + 4 + 8


# Dirac


def test_dirac_oracle_values():
    assert abs(dirac_eigenvalue_oracle(-0.8, 0) - 0.6) < 1e-15
    assert abs(dirac_eigenvalue_oracle(-0.8, 1) - (5 / 4) ** -0.5) < 1e-15
    assert 1 - dirac_eigenvalue_oracle(-0.8, 10**6) < 1e-12
    es = [dirac_eigenvalue_oracle(-0.8, j) for j in range(10)]
    assert all(a < b < 1 for a, b in zip(es, es[1:]))
    with pytest.raises(ValueError):
        dirac_eigenvalue_oracle(0.9, 0)


@pytest.mark.parametrize("z", [0.5 + 0.1j, 0.6 + 1e-3j, -0.3 + 0.2j, 2.0 + 0.5j])
def test_dirac_ground_state(z):
    s = ode_resolvent_sample(coulomb_dirac(-0.8), dirac_ground_f, z)
    ref = 1 / (0.6 - z)
    assert s.converged
    assert abs(s.value - ref) <= 1e-10 * abs(ref)
