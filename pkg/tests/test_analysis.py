import math

import numpy as np
import pytest

from fracplane.analysis import (build_chain, boundary_growth, classify_series, growth_divergent,
                                harnack_quotient, holder_seminorm, infimum_on_cap, lambda_grid,
                                lambda_sweep, left_continuity_probe, monitor_S, omega_limit,
                                positivity_alternative, profile_verdict, reflect_diff,
                                reflected_operator_values, symmetry_verdict, verify_small_volume_mp,
                                verify_subsolution_bound)
from fracplane.errors import (EmptyCap, EmptyRegion, GeometryViolation, NetFailure, OutOfRange,
                              PreconditionUnmet, TooShort)
from fracplane.extension import principal_eigenpair
from fracplane.fracops import FracParams, assemble_operator, small_volume_delta
from fracplane.geometry import Domain, Grid
from fracplane.solver import Trajectory, allen_cahn, simulate, zero_nonlinearity


def static(u, ts=(1.0, 2.0)):
    ts = np.asarray(ts, dtype=float)
    return Trajectory(ts, np.tile(u, (len(ts), 1)), 1.0, "static")


@pytest.fixture(scope="module")
def grid256():
    return Grid.build(Domain.interval(), 1 / 256)


# -- reflection ---------------------------------------------------------------

def test_reflect_diff_examples(grid64):
    x = grid64.points[:, 0]
    assert np.abs(reflect_diff(np.cos(x), 0.0, grid64).values).max() < 1e-15
    V = reflect_diff(x, 0.5, grid64)
    assert np.allclose(V.values, 1 - 2 * x[V.cells], atol=1e-14)
    k = np.argmin(np.abs(x[V.cells] - 0.75 + 1 / 128))
    assert math.isclose(V.values[k], 1 - 2 * x[V.cells][k], abs_tol=1e-14)
    u = np.where(x < 0.2, 1 - x**2, 0.0)
    assert reflect_diff(u, 0.2, grid64).values.min() >= 0
    with pytest.raises(EmptyCap):
        reflect_diff(x, 1.0, grid64)


def test_reflect_diff_linear_interpolation_exact():
    g = Grid.build(Domain.interval(), 1 / 10)
    x = g.points[:, 0]
    V = reflect_diff(x, 0.5, g)
    k = np.argmin(np.abs(x[V.cells] - 0.75))
    assert math.isclose(V.values[k], -0.5, abs_tol=1e-14)


def test_reflection_antisymmetry_on_mirror_pairs(grid64, rng):
    u = rng.normal(size=grid64.n)
    lam = 0.25
    V = reflect_diff(u, lam, grid64)
    m = grid64.mirror_index(lam)
    for c, v in zip(V.cells, V.values):
        if m[c] >= 0:
            assert math.isclose(v, u[m[c]] - u[c], abs_tol=1e-14)


def test_reflected_operator_values(op64, grid64):
    x = grid64.points[:, 0]
    u = np.clip(1 - np.abs(x) + 0.3 * x, 0, None)[None, :]
    out = reflected_operator_values(op64, 0.0, u)
    V = reflect_diff(u[0], 0.0, grid64)
    full = np.zeros(grid64.n)
    full[V.cells] = V.values
    full[grid64.mirror_index(0.0)[V.cells]] = -V.values
    direct = np.asarray(op64.A) @ full
    assert np.allclose(out[0][V.cells], direct[V.cells], atol=1e-10)


# -- (S_lambda) monitoring ------------------------------------------------------

def test_classify_examples():
    t = np.linspace(0, 20, 401)
    z = classify_series(t, np.zeros_like(t))
    assert z.holds and z.rate == math.inf
    t2 = np.linspace(0, 40, 801)
    r = classify_series(t2, 0.3 * np.exp(-t2))
    assert r.holds and abs(r.rate - 1.0) <= 0.05
    f = classify_series(t, 0.1 + 0.01 * np.sin(t))
    assert f.verdict == "fails"
    with pytest.raises(TooShort):
        classify_series(t[:10], np.zeros(10), burn_in=5.0)


def test_monitor_S_even_data_holds(op64, grid64):
    x = grid64.points[:, 0]
    traj = simulate(op64, allen_cahn(), 0.8 * (1 - np.abs(x)), 2.0, 0.01, save_every=5)
    for lam in (0.0, 0.25, 0.5):
        assert monitor_S(traj, lam, grid64).holds
    sweep = lambda_sweep(traj, grid64, lambda_grid(1.0, 8))
    assert sweep.lam0 == 0.0
    assert all(sweep.reports[lam].holds for lam in sweep.lams[-2:])


def test_lambda_sweep_threads_identical(op64, grid64):
    x = grid64.points[:, 0]
    u0 = np.clip(0.8 * (1 - np.abs(x)) * (1 + 0.4 * x), 0, 1)
    traj = simulate(op64, allen_cahn(), u0, 4.0, 0.01, save_every=5)
    a = lambda_sweep(traj, grid64, lambda_grid(1.0, 8), threads=1)
    b = lambda_sweep(traj, grid64, lambda_grid(1.0, 8), threads=8)
    for lam in a.lams:
        assert np.array_equal(a.reports[lam].series, b.reports[lam].series)
    assert a.lam0 == b.lam0


def test_lambda_grid():
    g = lambda_grid(1.0, 16)
    assert len(g) == 16 and g[0] == 0.0 and g[-1] < 1.0
    assert np.allclose(np.diff(g), 1 / 16)


# -- omega limits ---------------------------------------------------------------

def test_omega_constant_and_converging(grid64):
    u = np.cos(grid64.points[:, 0])
    om = omega_limit(static(u, np.linspace(0, 10, 11)), (5, 10), 1e-3)
    assert len(om.profiles) == 1 and om.settled
    t = np.linspace(0, 10, 101)
    U = u[None, :] * (1 + np.exp(-3 * t))[:, None]
    om = omega_limit(Trajectory(t, U, 0.1, "synthetic"), (8, 10), 1e-3)
    assert len(om.profiles) == 1 and max(om.diameters) <= 1e-3
    with pytest.raises(TooShort):
        omega_limit(Trajectory(t, U, 0.1, "synthetic"), (8, 12), 1e-3)


def test_omega_periodic_forcing():
    from fracplane.solver import Nonlinearity
    g = Grid.build(Domain.interval(), 1 / 32)
    op = assemble_operator(g, g.domain, FracParams(1, 0.5))
    P = 1.0
    a = lambda t: 3 * (1 + 0.2 * np.sin(2 * np.pi * t / P))  # mean above lambda_1: nontrivial orbit
    f = Nonlinearity(lambda t, x, u: a(t) * u - u**3, lower=-2, upper=2)
    x = g.points[:, 0]
    dt = 0.01
    traj = simulate(op, f, 0.8 * (1 - np.abs(x)), 20.0, dt, save_every=25)  # four phases per period
    om = omega_limit(traj, (15.0, 20.0), 1e-3)
    assert len(om.profiles) == 4
    assert max(om.diameters) <= 1e-3
    assert om.distances[np.triu_indices(4, 1)].min() > 1e-2


# -- symmetry verdicts ----------------------------------------------------------

def test_symmetry_examples(grid64):
    x = grid64.points[:, 0]
    ok = profile_verdict(np.cos(np.pi * x / 2), grid64, 5 * grid64.h, 1e-6)
    assert ok.passes and ok.decreasing
    zero = profile_verdict(np.zeros(grid64.n), grid64, 5 * grid64.h, 1e-6)
    assert zero.passes and zero.zero
    bad = profile_verdict(np.clip(1 - (x - 0.1) ** 2, 0, None), grid64, 5 * grid64.h, 1e-6)
    assert not bad.passes
    # |z(x) - z(-x)| = 0.4 |x|, largest on the outermost cells (x = +-0.9 in the continuum)
    xw = bad.evenness_witness[0]
    assert abs(abs(xw) - 0.9) < 2 * grid64.h
    assert math.isclose(bad.evenness, 0.4 * abs(xw), abs_tol=1e-12)


def test_symmetry_verdict_defaults(grid64):
    x = grid64.points[:, 0]
    om = omega_limit(static(np.cos(np.pi * x / 2)), (1.0, 2.0), 1e-3)
    (v,) = symmetry_verdict(om, grid64, u0_sup=1.0)
    assert v.passes and v.sym_tol == max(5 * grid64.h, 1e-4)


def test_symmetry_2d_disk():
    g = Grid.build(Domain.disk(), 1 / 16)
    r2 = (g.points**2).sum(1)
    assert profile_verdict(1 - r2, g, 5 * g.h, 1e-6).passes
    assert not profile_verdict(1 - r2 + 0.2 * g.points[:, 0], g, 5 * g.h, 1e-6).passes


def test_cap_infimum_probes(grid64):
    x = grid64.points[:, 0]
    z = np.cos(np.pi * x / 2)
    assert infimum_on_cap(z, 0.3, grid64) > 0
    assert left_continuity_probe(z, 0.3, grid64).left_continuous
    alt = positivity_alternative(z, grid64, [0.0, 0.25, 0.5])
    assert alt == {0.0: "zero", 0.25: "positive", 0.5: "positive"}
    alt = positivity_alternative(np.sin(np.pi * x), grid64, [0.0])
    assert alt[0.0] == "mixed"


# -- chains -------------------------------------------------------------------

def test_chain_theta_example():
    D = np.array([[0.0], [1.0], [2.0], [3.0]])
    ch = build_chain(D, 1.5, 7.0, 10.0, D[0], D[3], 0.0, 14.0)
    assert ch.n == 3
    assert math.isclose(ch.theta, 1 / 17, rel_tol=1e-14)
    assert ch.check() == []
    gaps = np.diff(ch.times)
    assert np.all(gaps >= 7 * ch.theta - 1e-12) and np.all(gaps <= 7.5 * ch.theta + 1e-12)
    assert max(14, ch.n) <= ch.m <= max(51, 3 * (ch.n + 3))
    assert ch.mu > 0


def test_chain_errors():
    D = np.array([[0.0], [5.0]])
    with pytest.raises(NetFailure):
        build_chain(D, 1.0, 1.0, 10.0, D[0], D[1], 0.0, 1.0)
    with pytest.raises(OutOfRange):
        build_chain(D, 1.0, 1.0, 1.0, D[0], D[1], 0.0, 1.0)
    with pytest.raises(OutOfRange):
        build_chain(D, 1.0, 1.0, 10.0, D[0], D[1], 0.0, 5.0)


# -- small-volume maximum principle ----------------------------------------------

def test_small_volume_vacuous(op64, grid64):
    x = grid64.points[:, 0]
    v = static(np.sin(np.pi * x / 2) * (x > 0))
    delta = small_volume_delta(1.0, 1.0, FracParams(1, 0.5))
    region = np.nonzero((x > 0.5) & (x < 0.5 + delta / 2))[0]
    res = verify_small_volume_mp(v, region, 1.0, 1.0, FracParams(1, 0.5), grid64)
    assert res.holds and res.neg.max() == 0


def test_small_volume_guards(grid64):
    x = grid64.points[:, 0]
    p = FracParams(1, 0.5)
    big = np.nonzero(x > 0)[0]
    with pytest.raises(PreconditionUnmet) as e:
        verify_small_volume_mp(static(-np.ones(grid64.n)), big, 1.0, 1.0, p, grid64)
    assert e.value.hypothesis == "volume"
    small = np.nonzero((x > 0.5) & (x < 0.55))[0]
    with pytest.raises(PreconditionUnmet) as e:
        verify_small_volume_mp(static(-np.ones(grid64.n)), small, 1.0, 1.0, p, grid64)
    assert e.value.hypothesis == "exterior"
    with pytest.raises(EmptyRegion):
        verify_small_volume_mp(static(np.zeros(grid64.n)), [], 1.0, 1.0, p, grid64)


# -- Harnack -------------------------------------------------------------------

def test_harnack_constant_and_guards(grid64):
    x = grid64.points[:, 0]
    tr = static(np.full(grid64.n, 0.7), np.linspace(0, 1, 11))
    D = np.nonzero(np.abs(x) < 0.2)[0]
    U = np.nonzero(np.abs(x) < 0.8)[0]
    rep = harnack_quotient(tr, D, U, 0.0, 0.25, grid64, r0=0.1)
    assert math.isclose(rep.quotient, 1.0, rel_tol=1e-12) and rep.neg_sup == 0
    with pytest.raises(GeometryViolation):
        harnack_quotient(tr, D, U, 0.0, 0.25, grid64, r0=0.2)
    with pytest.raises(GeometryViolation):
        harnack_quotient(tr, U, D, 0.0, 0.25, grid64, r0=0.01)
    with pytest.raises(TooShort):
        harnack_quotient(tr, D, U, 0.0, 0.5, grid64, r0=0.1)


def test_harnack_correction_term(grid64):
    x = grid64.points[:, 0]
    u = np.where(np.abs(x) < 0.5, 1.0, -0.3)
    rep = harnack_quotient(static(u, np.linspace(0, 1, 11)), np.nonzero(np.abs(x) < 0.1)[0],
                           np.arange(grid64.n), 0.0, 0.25, grid64, gap=0.0)
    assert rep.neg_sup == pytest.approx(0.3) and rep.quotient > 0


def test_harnack_heat_bump(op64, grid64):
    x = grid64.points[:, 0]
    tr = simulate(op64, zero_nonlinearity(), np.cos(np.pi * x / 2) ** 2, 1.0, 0.01)
    rep = harnack_quotient(tr, np.nonzero(np.abs(x) < 0.2)[0], np.nonzero(np.abs(x) < 0.8)[0],
                           0.0, 0.25, grid64, r0=0.15)
    assert 0 < rep.quotient <= 1


# -- subsolution bound -----------------------------------------------------------

@pytest.fixture(scope="module")
def eig025():
    return principal_eigenpair(0.25, 1, 1 / 1024)


@pytest.fixture(scope="module")
def eig02():
    return principal_eigenpair(0.2, 1, 1 / 1000)


def _synthetic(eig, grid, x0, sigma1, gamma, factor):
    """``factor sigma1 e^{-gamma t} Psi(x - x0)``, made odd about ``x_1 = 0``."""
    t = np.linspace(0, 2, 21)
    x = grid.points[:, 0]
    psi = eig((x - x0)[:, None])
    psi_m = eig((2 * 0.0 - x - x0)[:, None])  # odd about lam=0
    U = factor * sigma1 * np.exp(-gamma * t)[:, None] * (psi - psi_m)[None, :]
    return Trajectory(t, U, 0.1, "synthetic")


def test_subsolution_synthetic(eig025, grid256):
    x0, rho, gamma, q = 0.5, 0.25, 0.7, 10.0
    sigma1 = 1.0
    tr = _synthetic(eig025, grid256, x0, sigma1, gamma, 2.0)
    v = verify_subsolution_bound(tr, [x0], rho, sigma1 / q, sigma1, gamma, eig025, grid256, q)
    assert v.holds and math.isclose(v.min_ratio, 2.0, rel_tol=1e-12)
    low = _synthetic(eig025, grid256, x0, sigma1, gamma, 0.5)
    with pytest.raises(PreconditionUnmet) as e:
        verify_subsolution_bound(low, [x0], rho, sigma1 / q, sigma1, gamma, eig025, grid256, q)
    assert e.value.hypothesis == "iv"
    with pytest.raises(PreconditionUnmet) as e:
        verify_subsolution_bound(tr, [x0], rho, sigma1, sigma1, gamma, eig025, grid256, q)
    assert e.value.hypothesis == "iv"
    with pytest.raises(PreconditionUnmet) as e:
        verify_subsolution_bound(tr, [0.3], rho, sigma1 / q, sigma1, gamma, eig025, grid256, q)
    assert e.value.hypothesis == "geometry"



def test_subsolution_guards_ii_iii(eig02, grid256):
    # rho = 0.2 leaves H \ B_2rho(0.5) = (0, 0.1) u (0.9, 1) for hypothesis (iii)
    x0, rho, gamma, q, sigma1 = 0.5, 0.2, 0.7, 10.0, 1.0
    tr = _synthetic(eig02, grid256, x0, sigma1, gamma, 2.0)
    x = grid256.points[:, 0]
    v = verify_subsolution_bound(tr, [x0], rho, sigma1 / q, sigma1, gamma, eig02, grid256, q)
    assert v.holds
    neg = Trajectory(tr.t, tr.U - 0.01 * (np.abs(x - 0.8) < 0.03), 0.1, "x")
    with pytest.raises(PreconditionUnmet) as e:
        verify_subsolution_bound(neg, [x0], rho, sigma1 / q, sigma1, gamma, eig02, grid256, q)
    assert e.value.hypothesis == "ii"
    far = Trajectory(tr.t, tr.U - 0.5 * (np.abs(x - 0.95) < 0.03), 0.1, "x")
    with pytest.raises(PreconditionUnmet) as e:
        verify_subsolution_bound(far, [x0], rho, sigma1 / q, sigma1, gamma, eig02, grid256, q)
    assert e.value.hypothesis == "iii"
    # a small, fast-decaying negative part off B_2rho is admitted
    small = Trajectory(tr.t, tr.U - 0.05 * np.exp(-(gamma + 2) * tr.t)[:, None] * (np.abs(x - 0.95) < 0.03),
                       0.1, "x")
    assert verify_subsolution_bound(small, [x0], rho, sigma1 / q, sigma1, gamma, eig02, grid256, q).holds


# -- regularity diagnostics ------------------------------------------------------

def test_boundary_growth_examples(grid256):
    x = grid256.points[:, 0]
    rep = boundary_growth(static(np.sqrt(1 - x**2)), grid256.domain, grid256, 0.5)
    assert abs(rep.sup - math.sqrt(2)) < 1e-3
    assert boundary_growth(static(np.zeros(grid256.n)), grid256.domain, grid256, 0.5).sup == 0
    sups = []
    for h in (1 / 128, 1 / 256):
        g = Grid.build(Domain.interval(), h)
        sups.append(boundary_growth(static(np.ones(g.n)), g.domain, g, 0.5).sup)
    assert growth_divergent(*sups, 0.5)
    g = Grid.build(Domain.interval(), 1 / 128)
    smooth = boundary_growth(static(np.sqrt(1 - g.points[:, 0] ** 2)), g.domain, g, 0.5).sup
    assert not growth_divergent(smooth, rep.sup, 0.5)


def test_holder_examples(grid64):
    x = grid64.points[:, 0]
    G = np.nonzero(np.abs(x) <= 0.5)[0]
    assert holder_seminorm(static(np.ones(grid64.n)), G, 0.5, grid64, 0.5) == 0
    q = holder_seminorm(static(x), G, 0.3, grid64, 0.5)
    d = np.abs(x[G][:, None] - x[G][None, :])
    assert math.isclose(q, d.max() ** 0.7, rel_tol=1e-12)
    with pytest.raises(EmptyRegion):
        holder_seminorm(static(x), [], 0.5, grid64, 0.5)


def test_holder_refinement_sqrt():
    vals = {}
    hs = (1 / 64, 1 / 128, 1 / 256, 1 / 512)
    for h in hs:
        g = Grid.build(Domain.interval(), h)
        x = g.points[:, 0]
        G = np.nonzero(np.abs(x) <= 0.5)[0]
        u = static(np.sqrt(np.abs(x)))
        vals[h] = [holder_seminorm(u, G, a, g, 0.5) for a in (0.5, 0.6)]
    a5 = np.array([vals[h][0] for h in hs])
    a6 = np.array([vals[h][1] for h in hs])
    # alpha = 1/2: increments shrink geometrically, so the quotient stays bounded
    inc = np.diff(a5)
    assert np.all(inc[1:] < 0.8 * inc[:-1])
    # alpha = 0.6: the quotient grows like h^{-0.1}
    assert np.all(a6[1:] / a6[:-1] > 2 ** 0.1 * 0.99)
