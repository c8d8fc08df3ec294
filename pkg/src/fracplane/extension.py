"""Harmonic-extension machinery: Poisson kernel, ball eigenpair, barrier profile.

The extension of a grid function is evaluated exactly for its piecewise
constant interpolant: cell integrals of the Poisson kernel have closed
forms in 1-D (incomplete beta) and a one-dimensional angular integral in 2-D.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu
from scipy.special import betainc, gamma, kv

from .errors import (ConvergenceFailure, NonpositiveHeight, OutOfRange,
                     ProfileUnavailable, QuadratureFailure)
from .fracops import FracParams, unit_ball_volume


# -- Poisson kernel ---------------------------------------------------------

@lru_cache(maxsize=None)
def p_Ns(N, s):
    """Normalisation of G fixed by unit mass at height 1 (adaptive quadrature)."""
    a = (N + 2 * s) / 2
    if N == 1:
        half, _ = integrate.quad(lambda x: (x * x + 1) ** (-a), 0, np.inf, epsabs=0, epsrel=1e-12)
        mass = 2 * half
    else:
        radial, _ = integrate.quad(lambda r: r * (r * r + 1) ** (-a), 0, np.inf, epsabs=0, epsrel=1e-12)
        mass = 2 * math.pi * radial
    return 1.0 / mass


def p_Ns_closed(N, s):
    return gamma(N / 2 + s) / (math.pi ** (N / 2) * gamma(s))


def poisson_kernel(x, y, params):
    """``G(x, y) = p y^{2s} (|x|^2 + y^2)^{-(N+2s)/2}``."""
    if not y > 0:
        raise NonpositiveHeight("extension height must be positive")
    x = np.asarray(x, dtype=float)
    if params.N == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        r2 = x**2  # bare scalars or 1-D arrays of positions
    else:
        r2 = (x**2).sum(-1)
    s = params.s
    return p_Ns(params.N, s) * y ** (2 * s) * (r2 + y * y) ** (-(params.N + 2 * s) / 2)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _segment_mass_1d(u, y, s, p):
    """``int_0^u G(t, y) dt`` (signed), via the incomplete beta function."""
    u = np.asarray(u, dtype=float)
    arg = u * u / (u * u + y * y)
    return np.sign(u) * 0.5 * p * math.gamma(0.5) * gamma(s) / gamma(0.5 + s) * betainc(0.5, s, arg)


def _triangle_mass(a, b, y, s):
    """``int`` of ``y^{2s}(r^2+y^2)^{-1-s}`` over the triangle (0,0),(a,0),(a,b); a, b >= 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    top = np.arctan2(b, a)
    th = 0.5 * top[..., None] * (_GL_X + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        R2 = (a[..., None] / np.cos(th)) ** 2
        inner = (1.0 - (y * y / (R2 + y * y)) ** s) / (2 * s)
    out = 0.5 * top * (inner * _GL_W).sum(-1)
    return np.where((a > 0) & (b > 0), out, 0.0)


def _corner_mass_2d(a, b, y, s, p):
    """Signed ``int_0^a int_0^b G`` with the kernel centred at the origin."""
    sa, sb = np.sign(a), np.sign(b)
    a, b = np.abs(a), np.abs(b)
    return sa * sb * p * (_triangle_mass(a, b, y, s) + _triangle_mass(b, a, y, s))


def cell_masses(x, y, centers, h, params):
    """``int_{cell} G(x - z, y) dz`` for every cell centre."""
    s, p = params.s, p_Ns(params.N, params.s)
    d = np.asarray(centers, dtype=float) - np.asarray(x, dtype=float)
    if params.N == 1:
        d = d.reshape(-1)
        return _segment_mass_1d(d + h / 2, y, s, p) - _segment_mass_1d(d - h / 2, y, s, p)
    lo = d - h / 2
    hi = d + h / 2
    F = lambda u, v: _corner_mass_2d(u, v, y, s, p)
    return F(hi[:, 0], hi[:, 1]) - F(lo[:, 0], hi[:, 1]) - F(hi[:, 0], lo[:, 1]) + F(lo[:, 0], lo[:, 1])


@dataclass(frozen=True)
class ExtensionField:
    """Extension of the zero-extended piecewise-constant interpolant of ``v``."""

    grid: object
    values: np.ndarray = field(repr=False)
    params: FracParams

    @property
    def p_Ns(self):
        return p_Ns(self.params.N, self.params.s)


def extend(fld, x, y, fold_lam=None):
    """``w(x, y)``; with ``fold_lam`` the antisymmetric folded form is used.

    The folded form integrates ``G(x-z,y) - G(x-Q(z),y)`` against ``v`` over
    the cells with ``z_1 > fold_lam`` only.
    """
    if not y > 0:
        raise NonpositiveHeight("extension height must be positive")
    g = fld.grid
    v = np.asarray(fld.values, dtype=float)
    pts = g.points
    if fold_lam is None:
        return float(np.dot(v, cell_masses(x, y, pts, g.h, fld.params)))
    up = pts[:, 0] > fold_lam
    q = pts[up].copy()
    q[:, 0] = 2 * fold_lam - q[:, 0]
    m = cell_masses(x, y, pts[up], g.h, fld.params) - cell_masses(x, y, q, g.h, fld.params)
    return float(np.dot(v[up], m))


def neumann_trace(fld, x, ys=None):
    """``lim_{y->0} y^{1-2s} d_y w(x, y)`` by Richardson extrapolation.

    Uses ``y^{1-2s} d_y w ~ 2s (w(x,y) - w(x,0)) / y^{2s}`` whose expansion
    in y has exponents ``2-2s`` and 2.  ``x`` is snapped to the nearest cell
    centre, where the cell-edge jumps of the interpolant cancel.
    """
    s = fld.params.s
    if ys is None:
        ys = 2.0 ** -np.arange(4, 8)
    g = fld.grid
    k = int(np.argmin(np.linalg.norm(g.points - np.asarray(x, dtype=float), axis=1)))
    v0 = fld.values[k]
    x = g.points[k]
    D = np.array([2 * s * (extend(fld, x, y) - v0) / y ** (2 * s) for y in ys])
    return _richardson(np.asarray(ys), D, [2 - 2 * s, 2.0])


def _richardson(ys, vals, exponents):
    """Eliminate ``y^e`` terms for each exponent; ys halve successively."""
    v = np.asarray(vals, dtype=float)
    ratio = ys[0] / ys[1]
    for e in exponents:
        if len(v) < 2:
            break
        f = ratio**e
        v = (f * v[1:] - v[:-1]) / (f - 1)
    return float(v[-1])


# -- principal Dirichlet eigenpair of the ball ------------------------------

@dataclass(frozen=True)
class Eigenpair:
    rho: float
    N: int
    h: float
    lam1: float
    nodes: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    residual: float = 0.0
    _interp: object = field(default=None, repr=False, compare=False)

    def __call__(self, x):
        """``Psi`` at points relative to the ball centre; zero outside."""
        x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, self.N)
        r = np.sqrt((x**2).sum(1))
        out = np.asarray(self._interp(x if self.N > 1 else x[:, 0]), dtype=float).reshape(-1)
        return np.where(r < self.rho, np.maximum(out, 0.0), 0.0)

    def sqrt_integral(self):
        """``int_{B_rho} Psi^{1/2}``."""
        return float(np.sqrt(self.psi).sum() * self.h**self.N)


def _laplacian_1d(rho, h):
    m = int(round(2 * rho / h))
    if m < 3 or not math.isclose(m * h, 2 * rho, rel_tol=1e-9):
        raise OutOfRange("h must divide the diameter into at least 3 parts")
    x = -rho + h * np.arange(1, m)
    n = len(x)
    L = sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    return x[:, None], sparse.csc_matrix(L)


def _laplacian_disk(rho, h):
    """Shortley-Weller five-point Laplacian on the lattice ``h Z^2`` inside ``B_rho``."""
    m = int(math.floor(rho / h))
    ax = h * np.arange(-m, m + 1)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    inside = X**2 + Y**2 < rho**2 * (1 - 1e-12)
    idx = -np.ones(X.shape, dtype=int)
    idx[inside] = np.arange(inside.sum())
    rows, cols, vals = [], [], []
    for i, j in np.argwhere(inside):
        me = idx[i, j]
        x, y = X[i, j], Y[i, j]
        diag = 0.0
        for ax_k in (0, 1):
            arms = []
            for sgn in (-1, 1):
                ii, jj = (i + sgn, j) if ax_k == 0 else (i, j + sgn)
                nb = idx[ii, jj] if 0 <= ii < len(ax) and 0 <= jj < len(ax) else -1
                if nb >= 0:
                    arms.append((h, nb))
                else:
                    other = y if ax_k == 0 else x
                    along = x if ax_k == 0 else y
                    edge = math.sqrt(max(rho**2 - other**2, 0.0))
                    arms.append((edge - sgn * along, -1))
            (hm, nm), (hp, np_) = arms
            diag += 2.0 / (hm * hp)
            for hk, nk in ((hm, nm), (hp, np_)):
                if nk >= 0:
                    rows.append(me)
                    cols.append(nk)
                    vals.append(-2.0 / (hk * (hm + hp)))
        rows.append(me)
        cols.append(me)
        vals.append(diag)
    n = int(inside.sum())
    L = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
    nodes = np.stack([X[inside], Y[inside]], axis=1)
    return nodes, L, ax, idx


def principal_eigenpair(rho, N, h, maxiter=500, tol=1e-12):
    """First Dirichlet eigenpair of ``-Delta`` on ``B_rho`` by inverse power iteration."""
    if not rho > 0:
        raise OutOfRange("radius must be positive")
    if N == 1:
        nodes, L = _laplacian_1d(rho, h)
    elif N == 2:
        nodes, L, ax, idx = _laplacian_disk(rho, h)
    else:
        raise OutOfRange("N must be 1 or 2")
    lu = splu(L)
    u = np.ones(L.shape[0])
    lam = 0.0
    for _ in range(maxiter):
        z = lu.solve(u)
        lam_new = np.abs(u).max() / np.abs(z).max()
        u = z / np.abs(z).max()
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    else:
        raise ConvergenceFailure("inverse power iteration did not converge")
    u = np.abs(u) / np.abs(u).max()
    residual = float(np.abs(L @ u - lam * u).max())
    if N == 1:
        xs = np.concatenate([[-rho], nodes[:, 0], [rho]])
        ys = np.concatenate([[0.0], u, [0.0]])
        interp = lambda q: np.interp(q, xs, ys, left=0.0, right=0.0)
    else:
        box = np.zeros(idx.shape)
        box[idx >= 0] = u[idx[idx >= 0]]
        interp = RegularGridInterpolator((ax, ax), box, bounds_error=False, fill_value=0.0)
    return Eigenpair(float(rho), N, float(h), float(lam), nodes, u, residual, interp)


# -- the profile f of problem (D) -------------------------------------------

def d_s(s):
    return 2.0 ** (1 - 2 * s) * gamma(1 - s) / gamma(s)


def _cos_integral(z, a, terms=60):
    """``int_0^inf cos(t) (t^2 + z^2)^{-a} dt`` for ``z > 0``.

    Split at the zeros of cosine; the tail is an alternating series summed
    with repeated averaging of partial sums (Euler transform).
    """
    g = lambda t: math.cos(t) * (t * t + z * z) ** (-a)
    first, err = integrate.quad(g, 0.0, 0.5 * math.pi, points=[min(z, 0.25 * math.pi)],
                                epsabs=0.0, epsrel=1e-13, limit=200)
    if not math.isfinite(first):
        raise QuadratureFailure("first lobe did not converge")
    lobes = np.empty(terms)
    for k in range(terms):
        lo = 0.5 * math.pi + k * math.pi
        t = lo + 0.5 * math.pi * (_GL_X + 1.0)
        lobes[k] = 0.5 * math.pi * float((_GL_W * np.cos(t) * (t * t + z * z) ** (-a)).sum())
    partial = first + np.cumsum(lobes)
    avg = partial[terms // 2:]
    while len(avg) > 1:
        avg = 0.5 * (avg[1:] + avg[:-1])
    return float(avg[0])


def profile_value(y, s, lam1):
    """``f(y)`` from its integral representation (f(0) = 1)."""
    if y == 0:
        return 1.0
    z = math.sqrt(lam1) * y
    pref = 2.0 * gamma(s + 0.5) / (math.sqrt(math.pi) * gamma(s))
    return pref * z ** (2 * s) * _cos_integral(z, s + 0.5)


def profile_derivative(y, s, lam1):
    """``f'(y)`` from the integral representation of ``K_{1-s}``."""
    z = math.sqrt(lam1) * y
    pref = 2.0 ** (2 - 2 * s) * gamma(1.5 - s) / (math.sqrt(math.pi) * gamma(s))
    return -math.sqrt(lam1) * pref * z * _cos_integral(z, 1.5 - s)


def profile_bessel(y, s, lam1):
    """Closed form ``2^{1-s}/Gamma(s) z^s K_s(z)``, ``z = sqrt(lam1) y`` (cross-check)."""
    z = math.sqrt(lam1) * np.asarray(y, dtype=float)
    return 2.0 ** (1 - s) / gamma(s) * z**s * kv(s, z)


def profile_bessel_derivative(y, s, lam1):
    z = math.sqrt(lam1) * np.asarray(y, dtype=float)
    return -math.sqrt(lam1) * 2.0 ** (1 - s) / gamma(s) * z**s * kv(1 - s, z)


@dataclass(frozen=True)
class BarrierProfile:
    s: float
    lam1: float
    y: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    fprime: np.ndarray = field(repr=False)
    f1: float
    d_s: float
    kappa1: float
    kappa2: float

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return np.vectorize(lambda t: profile_value(float(t), self.s, self.lam1))(y)

    def ode_residual(self):
        """Max residual of ``f'' + (1-2s)/y f' - lam1 f`` on the tabulation (3-point FD)."""
        y, f = self.y, self.f
        h0, h1 = y[1:-1] - y[:-2], y[2:] - y[1:-1]
        d1 = (f[2:] * h0**2 - f[:-2] * h1**2 + f[1:-1] * (h1**2 - h0**2)) / (h0 * h1 * (h0 + h1))
        d2 = 2 * (f[2:] * h0 + f[:-2] * h1 - f[1:-1] * (h0 + h1)) / (h0 * h1 * (h0 + h1))
        r = d2 + (1 - 2 * self.s) / y[1:-1] * d1 - self.lam1 * f[1:-1]
        scale = np.abs(d2) + np.abs((1 - 2 * self.s) / y[1:-1] * d1) + self.lam1 * np.abs(f[1:-1])
        return float(np.max(np.abs(r) / scale))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["y", "f", "fprime"])
            for row in zip(self.y, self.f, self.fprime):
                wr.writerow([repr(float(v)) for v in row])


def neumann_limit(s, lam1, k0=6, levels=5):
    """``lim_{y->0} y^{1-2s} f'(y)`` by Richardson on ``y = 2^{-k}``."""
    ys = 2.0 ** -np.arange(k0, k0 + levels)
    vals = [y ** (1 - 2 * s) * profile_derivative(y, s, lam1) for y in ys]
    return _richardson(ys, vals, [2 - 2 * s, 2.0, 4 - 2 * s])


def bessel_profile(s, lam1, ygrid=None):
    if not 0 < s < 1:
        raise OutOfRange("s must lie in (0, 1)")
    if not lam1 > 0:
        raise OutOfRange("lam1 must be positive")
    if ygrid is None:
        # beyond z ~ 12 the profile is below 1e-5 and quadrature noise dominates
        top = min(20.0, 12.0 / math.sqrt(lam1))
        ygrid = np.unique(np.concatenate([np.geomspace(1e-3, top, 400), [1.0]]))
    y = np.asarray(ygrid, dtype=float)
    f = np.array([profile_value(t, s, lam1) for t in y])
    fp = np.array([profile_derivative(t, s, lam1) for t in y])
    if not np.all(np.isfinite(f)):
        raise QuadratureFailure("profile quadrature produced non-finite values")
    f1 = profile_value(1.0, s, lam1)
    ds = d_s(s)
    lim = neumann_limit(s, lam1)
    return BarrierProfile(s, lam1, y, f, fp, f1, ds, lam1**s * ds, lim / (1 - f1))


def extension_constants(s, lam1, profile=None):
    """``{d_s, kappa1, kappa2}``; kappa2 needs a tabulated profile."""
    ds = d_s(s)
    out = {"d_s": ds, "kappa1": lam1**s * ds}
    if profile is None:
        raise ProfileUnavailable("kappa2 needs a tabulated profile")
    if not (math.isclose(profile.s, s) and math.isclose(profile.lam1, lam1)):
        raise ProfileUnavailable("profile was tabulated for different (s, lam1)")
    out["kappa2"] = profile.kappa2
    return out


def barrier(t, x, y, profile, eig, gam):
    """``e^{-gamma t} Psi(x) (f(y) - f(1)) / (1 - f(1))``; zero outside the ball."""
    fy = profile.value(y) if np.ndim(y) else profile_value(float(y), profile.s, profile.lam1)
    return np.exp(-gam * t) * eig(x).reshape(np.shape(eig(x))) * (fy - profile.f1) / (1 - profile.f1)


def barrier_residual(profile, eig, gam, t=0.0, xs=None, ys=None, dx=None, dy=1e-3):
    """Finite-difference ``L_s`` of the barrier on a tensor lattice (1-D x).

    ``dx`` defaults to eight eigenfunction cells: ``Psi`` is interpolated
    linearly, so smaller steps only see its kinks.
    """
    s = profile.s
    if dx is None:
        dx = 8 * eig.h
    if xs is None:
        xs = np.linspace(-0.8, 0.8, 9) * eig.rho
    if ys is None:
        ys = np.linspace(0.1, 0.9, 9)
    W = lambda x, y: float(barrier(t, np.array([x]), y, profile, eig, gam)[0])
    out = np.empty((len(xs), len(ys)))
    for a, x in enumerate(xs):
        for b, y in enumerate(ys):
            c = W(x, y)
            wxx = (W(x + dx, y) - 2 * c + W(x - dx, y)) / dx**2
            wy = (W(x, y + dy) - W(x, y - dy)) / (2 * dy)
            wyy = (W(x, y + dy) - 2 * c + W(x, y - dy)) / dy**2
            out[a, b] = y ** (1 - 2 * s) * (wxx + wyy) + (1 - 2 * s) * y ** (-2 * s) * wy
    return out


def subsolution_rate(kappa2, c_inf):
    """``gamma = c_inf - kappa2 + 1``."""
    return c_inf - kappa2 + 1.0


@dataclass(frozen=True)
class LowerBoundConstants:
    c1: float
    c1_tilde: float
    c2: float
    c2_tilde: float


def lower_bound_constants(N, s, rho):
    omega = unit_ball_volume(N)
    c1 = 1.0 - ((1 + 4 * rho**2) / (1 + 8 * rho**2)) ** ((N + 2 * s) / 2)
    p = p_Ns(N, s)
    c1t = c1 * p / omega * (rho**2 + 1) ** (-(3 * N + 2 * s) / 2)
    c2 = N * omega / (2 * s) * rho ** (-2 * s)
    return LowerBoundConstants(c1, c1t, c2, c2 * p)


def q_constant(N, s, rho, eig):
    k = lower_bound_constants(N, s, rho)
    return 2 * k.c2_tilde / k.c1_tilde / eig.sqrt_integral() ** 2
