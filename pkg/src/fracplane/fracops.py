"""Kernel-level numerics for the fractional Laplacian with exterior Dirichlet data.

The dense operator is the midpoint discretisation of the singular integral

    (-Delta)^s u(x) = c_{N,s} P.V. int_Omega (u(x)-u(y)) |x-y|^{-N-2s} dy + kappa_Omega(x) u(x)

plus a near-field correction: the midpoint sum misses the even (second
order) part of the principal value, which on a uniform lattice equals a
regularised lattice sum.  In 1-D that sum is ``-2 zeta(2s-1)``; on the square
lattice it is ``-4 zeta(s) beta(s)``.  The correction enters as a
graph-Laplacian term between face neighbours, which keeps ``A`` symmetric,
keeps every off-diagonal entry non-positive and leaves ``A @ 1 = kappa``
untouched.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gamma

from . import _core
from .errors import (CapExceeded, CoincidentPoints, NonpositiveMeasure,
                     NonpositiveRate, OnBoundary, OutOfRange)

DEFAULT_CAP = 40_000


def frac_constant(N, s):
    """Normalisation ``c_{N,s} = s(1-s) pi^{-N/2} 4^s Gamma(N/2+s) / Gamma(2-s)``."""
    if not 0.0 < s < 1.0:
        raise OutOfRange(f"order s={s} outside (0, 1)")
    if N not in (1, 2):
        raise OutOfRange(f"dimension N={N} not supported")
    return s * (1.0 - s) * math.pi ** (-N / 2) * 4.0**s * gamma(N / 2 + s) / gamma(2.0 - s)


@dataclass(frozen=True)
class FracParams:
    N: int
    s: float

    def __post_init__(self):
        frac_constant(self.N, self.s)

    @property
    def c_Ns(self):
        return frac_constant(self.N, self.s)

    @property
    def expo(self):
        return self.N + 2.0 * self.s


@dataclass(frozen=True)
class Halfspace:
    """``{x : x_1 > lam}``."""

    lam: float = 0.0

    def dist(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] - self.lam

    def reflect(self, x):
        x = np.array(x, dtype=float)
        x[..., 0] = 2.0 * self.lam - x[..., 0]
        return x


def unit_ball_volume(N):
    return math.pi ** (N / 2) / gamma(N / 2 + 1)


@lru_cache(maxsize=None)
def lattice_correction(N, s):
    """Regularised ``int - sum`` of ``|z|^{2-N-2s} * z-weights`` on the unit lattice.

    Returned as the coefficient ``beta_N(s) < 0`` such that the missing
    near-field part of the principal value is ``c * beta_N(s) * h^{2-2s} * Laplacian(u)``.
    """
    if N == 1:
        return float(mpmath.zeta(2 * s - 1))
    return float(mpmath.zeta(s) * mpmath.dirichlet(s, [0, 1, 0, -1]))


def killing_potential(grid, domain, params):
    """``kappa_Omega`` at each Omega-cell.

    Evaluated once per mirror class ``|x_1|`` so that the values are exactly
    even whenever the grid is.
    """
    pts = grid.points
    key = pts.copy()
    if domain.is_x1_symmetric():
        key[:, 0] = np.abs(key[:, 0])
    uniq, inv = np.unique(np.round(key, 12), axis=0, return_inverse=True)
    vals = params.c_Ns * domain.exterior_integral(uniq, params.s)
    return vals[np.asarray(inv).ravel()]


@dataclass(frozen=True)
class NonlocalOperator:
    """Dense exterior-Dirichlet realisation of ``(-Delta)^s`` on a grid.

    ``A`` acts on grid functions (values on Omega-cells).  ``qtol`` records
    the quadrature tolerance of the exterior integrals behind ``kappa``.
    """

    grid: object
    params: FracParams
    A: np.ndarray = field(repr=False)
    kappa: np.ndarray = field(repr=False)
    alpha: float
    qtol: float

    @property
    def n(self):
        return self.A.shape[0]

    def apply(self, u):
        return self.A @ np.asarray(u, dtype=float)

    def dump(self, path):
        """Row-major doubles after an 8-byte little-endian ``n`` header."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", self.n))
            fh.write(np.ascontiguousarray(self.A, dtype="<f8").tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"matrix file {path} is truncated")
    return data.reshape(n, n).copy()


def assemble_operator(grid, domain, params, cap=DEFAULT_CAP, local_correction=True):
    n = grid.n
    if n > cap:
        raise CapExceeded(f"{n} Omega-cells exceed the cap of {cap}")
    c = params.c_Ns
    K = _core.kernel_matrix(grid.points, grid.weight, c, params.expo)
    kappa = killing_potential(grid, domain, params)
    A = -K
    A[np.diag_indices(n)] = K.sum(axis=1) + kappa
    alpha = 0.0
    if local_correction:
        alpha = -c * lattice_correction(params.N, params.s) * grid.h ** (-2 * params.s)
        pairs = grid.neighbor_pairs()
        i, j = pairs[:, 0], pairs[:, 1]
        A[i, j] -= alpha
        A[j, i] -= alpha
        np.add.at(A, (i, i), alpha)
        np.add.at(A, (j, j), alpha)
    A.setflags(write=False)
    kappa.setflags(write=False)
    qtol = 1e-10 if params.N == 1 else 1e-8
    return NonlocalOperator(grid, params, A, kappa, alpha, qtol)


def quadratic_form(u, v, op):
    """Discrete ``E(u, v)``: symmetric double sum plus the killing term.

    Uses exactly the pair weights of ``op.A``, so
    ``E(u, v) == sum((A u) * v) * h^N`` up to round-off.
    """
    grid, p = op.grid, op.params
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = grid.weight
    e = _core.pair_form(u, v, grid.points, w, p.c_Ns, p.expo, 0)
    e += float(np.dot(op.kappa * u, v)) * w
    if op.alpha:
        pairs = grid.neighbor_pairs()
        du = u[pairs[:, 0]] - u[pairs[:, 1]]
        dv = v[pairs[:, 0]] - v[pairs[:, 1]]
        e += op.alpha * w * float(np.dot(du, dv))
    return e


def antisym_kernel(x, y, H, params):
    """``J(x,y) = c|x-y|^{-N-2s} - c|x-Q(y)|^{-N-2s}`` for x, y in H."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.linalg.norm(x - y, axis=-1)
    if np.any(d == 0):
        raise CoincidentPoints("J is singular on the diagonal")
    dq = np.linalg.norm(x - H.reflect(y), axis=-1)
    c = params.c_Ns
    return c * d ** (-params.expo) - c * dq ** (-params.expo)


def halfspace_constant(s):
    """``kappa_H(x) * dist(x, dH)^{2s}``, i.e. ``c_{N,s} int_{x_1<0} |e_1 - y|^{-N-2s} dy``.

    Integrating out the transverse directions leaves
    ``4^s Gamma(1/2+s) / (2 sqrt(pi) Gamma(1-s))``, independent of N.
    """
    return 4.0**s * gamma(0.5 + s) / (2.0 * math.sqrt(math.pi) * gamma(1.0 - s))


def halfspace_potential(x, H, params):
    """``kappa_H(x) = c_{N,s} int_{R^N \\ H} |x-y|^{-N-2s} dy``."""
    d = np.asarray(H.dist(x), dtype=float)
    if np.any(d <= 0):
        raise OnBoundary("kappa_H needs dist(x, dH) > 0")
    return halfspace_constant(params.s) * d ** (-2 * params.s)


def reduced_kernel(x, y, beta, H, params):
    """Shifted kernel ``k(x,y) = g(x + t e_1, y + t e_1)`` with ``t = min(beta-x_1, beta-y_1)^+``.

    ``g`` is ``J`` on ``H x H`` and zero elsewhere; first coordinates are
    measured from the hyperplane of ``H``.
    """
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    if np.any(np.linalg.norm(x - y, axis=-1) == 0):
        raise CoincidentPoints("k is singular on the diagonal")
    x1 = x[..., 0] - H.lam
    y1 = y[..., 0] - H.lam
    t = np.minimum(beta - x1, beta - y1)
    t = np.where(t >= 0, t, 0.0)
    xs, ys = x.copy(), y.copy()
    xs[..., 0] += t
    ys[..., 0] += t
    inside = (xs[..., 0] > H.lam) & (ys[..., 0] > H.lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        J = antisym_kernel(xs, ys, H, params)
    return np.where(inside, J, 0.0)


def volume_bound(measure, params):
    """``K |A|^{-2s/N}`` with ``K = (N/2s) omega_N^{1+2s/N}``."""
    if not measure > 0:
        raise NonpositiveMeasure("measure must be positive")
    N, s = params.N, params.s
    K = (N / (2 * s)) * unit_ball_volume(N) ** (1 + 2 * s / N)
    return K * measure ** (-2 * s / N)


def small_volume_delta(gam, c_inf, params):
    """Admissible measure ``(c_{N,s} K / (gamma + c_inf))^{N/2s}``."""
    if not (gam > 0 and c_inf > 0):
        raise NonpositiveRate("gamma and c_inf must be positive")
    N, s = params.N, params.s
    K = volume_bound(1.0, params)
    return (params.c_Ns * K / (gam + c_inf)) ** (N / (2 * s))


# -- antisymmetric decompositions on a grid ---------------------------------

def _exterior_pieces(domain, x, lam, s):
    """Exact integrals of ``|x-.|^{-N-2s}`` (without ``c_{N,s}``) for ``x`` in ``H ∩ Omega``.

    Returns ``(near, far)`` with ``near = int_{H \\ Omega}`` and
    ``far = int_{H^c \\ Q(Omega)}``, plus the exact mirror integrals
    ``(int_{H^c ∩ Omega}, int_{H^c ∩ Q(Omega)})``.
    """
    t = lambda a: a ** (-2 * s) / (2 * s)
    if domain.dim == 1:
        if domain.kind != "interval":
            raise OutOfRange("1-D decomposition needs an interval")
        lo, hi = domain.bounds[0]
        x1 = x[0]
        near = t(hi - x1)
        far = t(x1 - (2 * lam - hi))
        m_omega = t(x1 - lam) - t(x1 - lo)
        m_refl = t(x1 - lam) - far
        return near, far, m_omega, m_refl
    if not (domain.kind in ("disk", "rectangle") and abs(lam) < 1e-14 and domain.is_x1_symmetric()):
        raise OutOfRange("2-D decomposition needs a convex domain symmetric about x_1 = lam")
    d_plane = x[0] - lam

    def split(th, k):
        rho = domain.ray_exit(x, th)
        c = math.cos(th)
        if c >= 0:
            return rho ** (-2 * s) if k == 0 else 0.0
        rp = d_plane / (-c)
        if rho <= rp:
            return (rho ** (-2 * s) - rp ** (-2 * s), rp ** (-2 * s), 0.0)[k]
        return (0.0, rho ** (-2 * s), rp ** (-2 * s) - rho ** (-2 * s))[k]

    pts = sorted(set(domain._ray_breakpoints(x)) | {0.5 * math.pi, 1.5 * math.pi})
    pts = [p for p in pts if 0 < p < 2 * math.pi]
    out = []
    for k in range(3):
        val, _ = integrate.quad(split, 0.0, 2 * math.pi, args=(k,), points=pts,
                                epsrel=1e-11, epsabs=0.0, limit=500)
        out.append(val / (2 * s))
    near, far, mirror = out
    return near, far, mirror, mirror


@dataclass(frozen=True)
class FormComparison:
    direct: float
    decomposed: float
    qtol: float

    @property
    def error(self):
        return abs(self.direct - self.decomposed)

    def agrees(self, factor=10.0):
        return self.error <= factor * self.qtol


def direct_form(v, phi, grid, domain, params):
    """Midpoint double sum of the quadratic form plus the exact exterior term.

    No near-field correction, so that it can be rearranged pair by pair.
    """
    w = grid.weight
    kappa = killing_potential(grid, domain, params)
    e = _core.pair_form(v, phi, grid.points, w, params.c_Ns, params.expo, 0)
    return e + float(np.dot(kappa * v, phi)) * w


def antisym_form(v, phi, grid, domain, params, lam=0.0, beta=None):
    """Compare ``E(v, phi)`` with its half-space decomposition.

    ``v`` is odd under reflection at ``x_1 = lam`` (zero on Omega-cells whose
    mirror leaves Omega) and ``phi`` lives on H-cells, or on ``H_beta``-cells
    when ``beta`` is given, in which case the shifted kernel ``k`` acts on
    ``v 1_H`` over all cells.  The decomposed side is

        1/2 sum_{H x H} (v_x-v_y)(phi_x-phi_y) J w^2
        + sum_x v phi w int_{H \\ Omega} J(x, .) + 2 sum_x kappa_H v phi w.

    Rearranging the direct midpoint sum pair by pair shows the two sides
    differ only by the midpoint errors of ``int_{H^c ∩ Omega} K`` and
    ``int_{H^c ∩ Q(Omega)} K``; ``qtol`` sums those errors with weights
    ``|v phi| w``.
    """
    v = np.asarray(v, dtype=float)
    phi = np.asarray(phi, dtype=float)
    H = Halfspace(lam)
    w, c, ex = grid.weight, params.c_Ns, params.expo
    x1 = grid.points[:, 0]
    inH = x1 > lam
    if np.any(phi[~inH] != 0):
        raise OutOfRange("phi must vanish outside the half-space cells")
    mirror = grid.mirror_index(lam)
    if np.any(v[mirror < 0] != 0):
        raise OutOfRange("v must vanish on cells without an exact mirror")
    ok = mirror >= 0
    if not np.allclose(v[ok], -v[mirror[ok]], rtol=0, atol=1e-14 * (1 + np.abs(v).max())):
        raise OutOfRange("v is not antisymmetric about x_1 = lam")
    direct = direct_form(v, phi, grid, domain, params)
    if beta is None:
        e = _core.pair_form(v[inH], phi[inH], grid.points[inH], w, c, ex, 1, lam, 0.0)
    else:
        if np.any(phi[x1 - lam <= beta] != 0):
            raise OutOfRange("phi must vanish outside H_beta")
        e = _core.pair_form(np.where(inH, v, 0.0), phi, grid.points, w, c, ex, 2, lam, beta)
    cells = np.nonzero(phi != 0)[0]
    vp = v[cells] * phi[cells] * w
    pieces = np.array([_exterior_pieces(domain, grid.points[i], lam, params.s) for i in cells])
    pieces = pieces.reshape(-1, 4) * c
    near, far, m_omega, m_refl = pieces.T
    kH = halfspace_potential(grid.points[cells], H, params) if len(cells) else np.zeros(0)
    decomposed = e + float(np.dot(vp, near - far)) + 2.0 * float(np.dot(vp, kH))
    Hc_pts = grid.points[~inH]
    Q_pts = reflect_points(grid.points[inH], lam)
    qerr = np.empty(len(cells))
    for k, i in enumerate(cells):
        xi = grid.points[i]
        s1 = (np.linalg.norm(Hc_pts - xi, axis=1) ** (-ex)).sum()
        s2 = (np.linalg.norm(Q_pts - xi, axis=1) ** (-ex)).sum()
        qerr[k] = abs(c * w * s1 - m_omega[k]) + abs(c * w * s2 - m_refl[k])
    qtol = float(np.dot(np.abs(vp), qerr))
    return FormComparison(direct, decomposed, qtol)


def reflect_points(points, lam):
    q = np.array(points, dtype=float)
    q[:, 0] = 2.0 * lam - q[:, 0]
    return q
