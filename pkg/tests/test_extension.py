import csv
import math

import numpy as np
import pytest
from scipy import integrate

from fracplane.errors import NonpositiveHeight, ProfileUnavailable
from fracplane.extension import (ExtensionField, barrier, barrier_residual, bessel_profile, d_s, extend,
                                 extension_constants, lower_bound_constants, neumann_trace, p_Ns, p_Ns_closed,
                                 poisson_kernel, principal_eigenpair, profile_bessel,
                                 profile_bessel_derivative, profile_value, q_constant, subsolution_rate)
from fracplane.fracops import FracParams, assemble_operator
from fracplane.geometry import Domain, Grid


@pytest.fixture(scope="module")
def eig1():
    return principal_eigenpair(1.0, 1, 1 / 512)


@pytest.fixture(scope="module")
def prof_half():
    return bessel_profile(0.5, 1.0)


def test_poisson_kernel_classical(half):
    assert math.isclose(poisson_kernel(0.0, 1.0, half), 1 / math.pi, rel_tol=1e-10)
    with pytest.raises(NonpositiveHeight):
        poisson_kernel(0.0, 0.0, half)


@pytest.mark.parametrize("N,s", [(1, 0.5), (1, 0.3), (2, 0.5), (2, 0.7)])
def test_poisson_normalisation(N, s):
    assert math.isclose(p_Ns(N, s), p_Ns_closed(N, s), rel_tol=1e-9)
    p = FracParams(N, s)
    if N == 1:
        mass = integrate.quad(lambda x: poisson_kernel(x, 1.0, p), -np.inf, np.inf, epsabs=0, epsrel=1e-11)[0]
    else:
        mass = integrate.quad(lambda r: 2 * math.pi * r * poisson_kernel(np.array([r, 0.0]), 1.0, p),
                              0, np.inf, epsabs=0, epsrel=1e-11)[0]
    assert abs(mass - 1) < 1e-8


def test_poisson_homogeneity(rng):
    p = FracParams(2, 0.35)
    for _ in range(10):
        lam = rng.uniform(0.2, 5)
        x = rng.normal(size=2)
        y = rng.uniform(0.1, 2)
        assert math.isclose(poisson_kernel(lam * x, lam * y, p), lam**-2 * poisson_kernel(x, y, p), rel_tol=1e-12)


def test_extension_of_constants_tends_to_one(half):
    vals = []
    for L in (10.0, 100.0):
        g = Grid.build(Domain.interval(-L, L), 0.25)
        vals.append(extend(ExtensionField(g, np.ones(g.n), half), np.array([0.125]), 1.0))
    assert vals[0] < vals[1] < 1
    assert vals[1] > 0.99


def test_extension_of_cosine(half):
    g = Grid.build(Domain.interval(-20, 20), 1 / 32)
    w = extend(ExtensionField(g, np.cos(g.points[:, 0]), half), np.array([0.0]), 1.0)
    assert abs(w - math.exp(-1)) < 2e-3


def test_folded_form_for_odd_functions(rng):
    p = FracParams(2, 0.4)
    g = Grid.build(Domain.disk(), 1 / 8)
    mirror = g.mirror_index(0.0)
    v = np.zeros(g.n)
    up = g.points[:, 0] > 0
    v[up] = rng.normal(size=up.sum())
    v[mirror[up]] = -v[up]
    fld = ExtensionField(g, v, p)
    x = np.array([0.3, 0.1])
    assert math.isclose(extend(fld, x, 0.5, fold_lam=0.0), extend(fld, x, 0.5), rel_tol=1e-10, abs_tol=1e-13)
    zero = ExtensionField(g, np.zeros(g.n), p)
    assert extend(zero, x, 0.5, fold_lam=0.0) == 0.0


def test_trace_recovery(half):
    g = Grid.build(Domain.interval(), 1 / 128)
    v = np.cos(np.pi * g.points[:, 0] / 2)
    fld = ExtensionField(g, v, half)
    k = int(np.argmin(np.abs(g.points[:, 0] - 0.3)))
    ws = [extend(fld, g.points[k], 2.0**-j) for j in range(4, 11)]
    gaps = np.abs(np.diff(ws))
    assert np.all(gaps[1:] <= gaps[:-1] * 1.01)
    assert abs(ws[-1] - v[k]) < 5e-3


@pytest.mark.parametrize("s", [0.5, 0.3])
def test_neumann_trace_matches_operator(s):
    dom = Domain.interval()
    g = Grid.build(dom, 1 / 128)
    p = FracParams(1, s)
    x = g.points[:, 0]
    v = np.cos(np.pi * x / 2) ** 4
    Av = assemble_operator(g, dom, p).apply(v)
    fld = ExtensionField(g, v, p)
    for x0 in np.linspace(-0.6, 0.6, 10):
        k = int(np.argmin(np.abs(x - x0)))
        approx = -neumann_trace(fld, g.points[k]) / d_s(s)
        assert abs(approx - Av[k]) < 2e-2 * max(1.0, abs(Av[k]))


def test_eigenpair_1d(eig1):
    assert abs(eig1.lam1 - math.pi**2 / 4) < 1e-3
    xs = np.linspace(-0.99, 0.99, 41)[:, None]
    assert np.abs(eig1(xs) - np.cos(np.pi * xs[:, 0] / 2)).max() < 1e-3
    assert eig1.psi.max() == pytest.approx(1.0)
    assert eig1(np.array([[1.5]]))[0] == 0.0


def test_eigenpair_2d_and_scaling():
    e = principal_eigenpair(1.0, 2, 1 / 128)
    assert abs(e.lam1 - 2.404825557695773**2) < 5e-2
    e_half = principal_eigenpair(0.5, 1, 1 / 512)
    assert math.isclose(e_half.lam1, 4 * principal_eigenpair(1.0, 1, 1 / 256).lam1, rel_tol=1e-6)


def test_extension_constants(prof_half):
    assert math.isclose(d_s(0.5), 1.0, rel_tol=1e-15)
    with pytest.raises(ProfileUnavailable):
        extension_constants(0.5, 4.0)
    c = extension_constants(0.5, 1.0, prof_half)
    assert math.isclose(c["kappa1"], 1.0, rel_tol=1e-14)
    assert abs(c["kappa2"] + 1 / (1 - math.exp(-1))) < 1e-6
    assert math.isclose(bessel_profile(0.5, 4.0, [0.5, 1.0]).kappa1, 2.0, rel_tol=1e-14)


def test_profile_half_closed_form(prof_half):
    assert abs(profile_value(1.0, 0.5, 1.0) - math.exp(-1)) < 1e-6
    assert profile_value(0.0, 0.3, 2.0) == 1.0
    assert np.all(np.diff(prof_half.f) < 0)


@pytest.mark.parametrize("s,lam", [(0.3, 2.0), (0.8, 5.7)])
def test_profile_against_bessel(s, lam):
    prof = bessel_profile(s, lam)
    assert np.all(np.diff(prof.f) < 0)
    assert np.allclose(prof.f, profile_bessel(prof.y, s, lam), rtol=1e-6, atol=1e-9)
    assert np.allclose(prof.fprime, profile_bessel_derivative(prof.y, s, lam), rtol=1e-6, atol=1e-9)
    assert prof.ode_residual() < 1e-2
    assert prof.kappa2 < 0


def test_profile_csv(prof_half, tmp_path):
    p = tmp_path / "f.csv"
    prof_half.to_csv(p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["y", "f", "fprime"]
    assert float(rows[1][1]) == prof_half.f[0]


def test_barrier(eig1):
    prof = bessel_profile(0.5, eig1.lam1, [0.25, 0.5, 1.0])
    x = np.array([[0.2]])
    assert math.isclose(barrier(0.5, x, 0.0, prof, eig1, 2.0)[0], math.exp(-1) * eig1(x)[0], rel_tol=1e-12)
    assert barrier(0.5, x, 1.0, prof, eig1, 2.0)[0] == 0.0
    assert barrier_residual(prof, eig1, 2.0).min() >= -1e-8


def test_subsolution_constants(eig1):
    assert subsolution_rate(-1.5, 2.0) == 4.5
    e = principal_eigenpair(0.25, 1, 1 / 1024)
    k = lower_bound_constants(1, 0.5, 0.25)
    assert k.c1 > 0 and k.c1_tilde > 0 and k.c2_tilde > 0
    q = q_constant(1, 0.5, 0.25, e)
    assert 1000 < q < 2000
