import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma

from fracplane.errors import CapExceeded, CoincidentPoints, NonpositiveMeasure, NonpositiveRate, OnBoundary, OutOfRange
from fracplane.fracops import (FracParams, Halfspace, antisym_form, antisym_kernel, assemble_operator,
                               frac_constant, halfspace_potential, killing_potential, load_matrix,
                               quadratic_form, reduced_kernel, small_volume_delta, volume_bound)
from fracplane.geometry import Domain, Grid


def test_frac_constant_values():
    assert math.isclose(frac_constant(1, 0.5), 1 / math.pi, rel_tol=1e-13)
    assert math.isclose(frac_constant(2, 0.5), 1 / (2 * math.pi), rel_tol=1e-13)
    assert math.isclose(frac_constant(1, 0.25), math.sqrt(2) / (4 * math.sqrt(math.pi)), rel_tol=1e-12)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.5])
def test_frac_constant_range(s):
    with pytest.raises(OutOfRange):
        frac_constant(1, s)


def test_frac_constant_fourier_oracle():
    # (-Delta)^s of a Gaussian at 0 from the symbol, against the singular integral
    s = 0.3
    c = frac_constant(1, s)
    half_line, _ = integrate.quad(lambda k: k ** (2 * s) * math.exp(-k * k / 4), 0, np.inf, epsabs=0, epsrel=1e-12)
    spectral = 2 * half_line * math.sqrt(math.pi) / (2 * math.pi)
    pv, _ = integrate.quad(lambda y: (1 - math.exp(-y * y)) * y ** (-1 - 2 * s), 0, np.inf, limit=200)
    assert math.isclose(2 * c * pv, spectral, rel_tol=1e-8)


def test_killing_potential_1d_values(interval, half):
    c = half.c_Ns
    k = c * interval.exterior_integral(np.array([[0.0], [0.9]]), 0.5)
    assert math.isclose(k[0], 2 / math.pi, rel_tol=1e-12)
    assert math.isclose(k[1], (1 / 0.1 + 1 / 1.9) / math.pi, rel_tol=1e-12)


def test_killing_potential_even_and_growing(grid64, interval, half):
    k = killing_potential(grid64, interval, half)
    assert np.array_equal(k, k[::-1])
    right = k[grid64.points[:, 0] > 0]
    assert np.all(np.diff(right) > 0)


def test_killing_potential_2d_radial():
    dom = Domain.disk()
    g = Grid.build(dom, 1 / 16)
    k = killing_potential(g, dom, FracParams(2, 0.5))
    r = np.linalg.norm(g.points, axis=1)
    order = np.argsort(r)
    assert np.all(k > 0)
    # monotone along the radius up to quadrature noise
    assert np.all(np.diff(k[order]) > -1e-6 * k.max())


def test_operator_structure(op64, grid64, interval):
    A = np.asarray(op64.A)
    assert np.allclose(A, A.T, rtol=1e-10, atol=0)
    off = A - np.diag(np.diag(A))
    assert off.max() <= 0
    assert np.all(np.diag(A) > 0)
    assert np.allclose(A @ np.ones(grid64.n), op64.kappa, rtol=1e-10)


def test_getoor_identity_refines(interval, half):
    errs = []
    for h in (1 / 64, 1 / 128):
        g = Grid.build(interval, h)
        op = assemble_operator(g, interval, half)
        x = g.points[:, 0]
        Au = op.apply(np.sqrt(1 - x**2))
        errs.append(np.abs(Au - 1)[np.abs(x) <= 0.8].max())
    assert errs[1] < errs[0] < 0.1


def test_cap_exceeded(grid64, interval, half):
    with pytest.raises(CapExceeded):
        assemble_operator(grid64, interval, half, cap=10)


def test_dump_round_trip(op64, tmp_path):
    p = tmp_path / "A.bin"
    op64.dump(p)
    raw = p.read_bytes()
    assert int.from_bytes(raw[:8], "little") == op64.n
    assert np.array_equal(load_matrix(p), op64.A)


def test_quadratic_form(op64, grid64, rng):
    x = grid64.points[:, 0]
    u = np.cos(np.pi * x / 2) ** 2
    assert quadratic_form(u, np.zeros_like(u), op64) == 0
    for _ in range(50):
        a, b = rng.normal(size=(2, grid64.n))
        assert math.isclose(quadratic_form(a, b, op64), quadratic_form(b, a, op64), rel_tol=1e-12, abs_tol=1e-12)
        assert quadratic_form(a, a, op64) > 0
    ref = float(np.dot(op64.apply(u), u)) * grid64.weight
    assert math.isclose(quadratic_form(u, u, op64), ref, rel_tol=1e-3)


def test_antisym_kernel(half):
    H = Halfspace(0.0)
    assert math.isclose(antisym_kernel([1.0], [2.0], H, half), 8 / (9 * math.pi), rel_tol=1e-13)
    with pytest.raises(CoincidentPoints):
        antisym_kernel([1.0], [1.0], H, half)


def test_antisym_kernel_symmetry_and_lower_bound(rng):
    H = Halfspace(0.0)
    for p in (FracParams(1, 0.5), FracParams(2, 0.3)):
        x = rng.uniform(0.5, 3, size=(200, p.N))
        y = rng.uniform(0.5, 3, size=(200, p.N))
        assert np.allclose(antisym_kernel(x, y, H, p), antisym_kernel(y, x, H, p), rtol=1e-12)
        d = np.linalg.norm(x - y, axis=1)
        near = d <= np.minimum(x[:, 0], y[:, 0])
        lb = (1 - 5 ** (-p.N / 2 - p.s)) * p.c_Ns * d[near] ** (-p.expo)
        assert np.all(antisym_kernel(x[near], y[near], H, p) >= lb * (1 - 1e-12))


def test_halfspace_potential_quadrature_oracle(rng):
    H = Halfspace(0.0)
    for _ in range(20):
        s = rng.uniform(0.1, 0.9)
        d = rng.uniform(0.2, 3.0)
        p = FracParams(1, s)
        ref, _ = integrate.quad(lambda y: (d + y) ** (-1 - 2 * s), 0, np.inf, epsabs=0, epsrel=1e-12)
        ref *= p.c_Ns
        assert math.isclose(halfspace_potential(np.array([d]), H, p), ref, rel_tol=1e-6)


def test_halfspace_potential_2d_matches_1d():
    H = Halfspace(0.0)
    s, d = 0.4, 0.7
    p2 = FracParams(2, s)
    # t = r tan(theta) turns the transverse integral into a finite one
    inner = lambda r: 2 * r ** (-1 - 2 * s) * integrate.quad(lambda th: math.cos(th) ** (2 * s), 0, math.pi / 2,
                                                          epsabs=0, epsrel=1e-13)[0]
    ref = p2.c_Ns * integrate.quad(inner, d, np.inf, epsabs=0, epsrel=1e-10, limit=200)[0]
    assert math.isclose(float(halfspace_potential(np.array([d, 0.3]), H, p2)), ref, rel_tol=1e-6)


def test_halfspace_potential_homogeneity_and_boundary(half):
    H = Halfspace(0.0)
    k1 = halfspace_potential(np.array([1.0]), H, half)
    k2 = halfspace_potential(np.array([2.0]), H, half)
    assert math.isclose(k2, 0.5 * k1, rel_tol=1e-14)
    with pytest.raises(OnBoundary):
        halfspace_potential(np.array([0.0]), H, half)


def test_reduced_kernel(rng, half):
    H = Halfspace(0.0)
    beta = 0.4
    x = rng.uniform(beta, 2, size=(50, 1))
    y = rng.uniform(beta, 2, size=(50, 1))
    assert np.allclose(reduced_kernel(x, y, beta, H, half), antisym_kernel(x, y, H, half))
    x = rng.uniform(-1, 2, size=(100, 1))
    y = rng.uniform(-1, 2, size=(100, 1))
    assert np.allclose(reduced_kernel(x, y, beta, H, half), reduced_kernel(y, x, beta, H, half))
    y = x + rng.uniform(-beta / 2, beta / 2, size=x.shape)
    d = np.abs(x - y)[:, 0]
    k = reduced_kernel(x, y, beta, H, half)
    assert np.all(k >= 0.8 * half.c_Ns * d ** (-2) * (1 - 1e-12))


def test_volume_bound_and_delta(half):
    assert math.isclose(volume_bound(1.0, half), 4.0, rel_tol=1e-14)
    assert math.isclose(volume_bound(0.5, half), 8.0, rel_tol=1e-14)
    assert volume_bound(10.0, half) < volume_bound(5.0, half)
    with pytest.raises(NonpositiveMeasure):
        volume_bound(0.0, half)
    d = small_volume_delta(1.0, 1.0, half)
    assert math.isclose(d, 2 / math.pi, rel_tol=1e-13)
    assert small_volume_delta(2.0, 1.0, half) < d
    assert half.c_Ns * volume_bound(0.9 * d, half) >= 2.0
    with pytest.raises(NonpositiveRate):
        small_volume_delta(0.0, 1.0, half)


def _antisym_pair(grid, lam, rng, beta=None):
    x1 = grid.points[:, 0]
    mirror = grid.mirror_index(lam)
    up = (x1 > lam) & (mirror >= 0)
    v = np.zeros(grid.n)
    v[up] = rng.normal(size=up.sum())
    v[mirror[up]] = -v[up]
    assert up.any(), "no exact mirror cells at this lam"
    lo = lam if beta is None else lam + beta
    phi = np.where(x1 > lo, rng.normal(size=grid.n), 0.0)
    return v, phi


@pytest.mark.parametrize("lam", [0.0, 0.25])
def test_antisymmetric_identity_1d(interval, half, rng, lam):
    g = Grid.build(interval, 1 / 32)
    for _ in range(3):
        v, phi = _antisym_pair(g, lam, rng)
        assert antisym_form(v, phi, g, interval, half, lam=lam).agrees()
        v, phi = _antisym_pair(g, lam, rng, beta=0.2)
        assert antisym_form(v, phi, g, interval, half, lam=lam, beta=0.2).agrees()


def test_antisymmetric_identity_2d(rng):
    dom = Domain.disk()
    g = Grid.build(dom, 1 / 8)
    p = FracParams(2, 0.5)
    v, phi = _antisym_pair(g, 0.0, rng)
    assert antisym_form(v, phi, g, dom, p).agrees()
