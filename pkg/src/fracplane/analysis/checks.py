"""Numerical checks of the quantitative estimates on simulated trajectories.

Each check verifies a hypothesis first and raises ``PreconditionUnmet``
(naming the hypothesis) when a run falls outside its scope, so an
out-of-scope run is never reported as a failed estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .. import _core
from ..errors import EmptyRegion, GeometryViolation, PreconditionUnmet, TooShort
from ..fracops import small_volume_delta
from ..solver import LinearCoefficient, linear_supersolution_residual
from .moving_plane import fit_decay

SLACK = 1.05


def _cells(region):
    cells = np.asarray(region)
    if cells.dtype == bool:
        cells = np.nonzero(cells)[0]
    return cells.astype(int)


def _consistency_budget(traj, cells):
    """``dt * sup |d_tt v|``: the time-discretisation error of a centred residual."""
    if len(traj.t) < 3:
        return 0.0
    dt = float(np.diff(traj.t).max())
    d2 = np.diff(traj.U[:, cells], n=2, axis=0) / dt**2
    return 2.0 * dt * float(np.abs(d2).max())


# -- small-volume maximum principle -------------------------------------------

@dataclass(frozen=True)
class SmallVolumeVerdict:
    holds: bool
    worst_margin: float
    rate: float
    measure: float
    delta: float
    residual_min: float
    residual_tol: float
    neg: np.ndarray = field(repr=False)


def verify_small_volume_mp(vtraj, region, gamma, c_inf, params, grid, op=None, c=None,
                           lam=0.0, apply=None, residual_tol=None, slack=SLACK):
    """Check ``||v^-(t)|| <= slack e^{-gamma (t - t0)} ||v^-(t0)||`` on ``H_lam``.

    Preconditions: the region measure is at most ``small_volume_delta``,
    ``v`` is a supersolution on the region with ``c`` (default the
    constant ``c_inf``) up to the time-discretisation budget, and ``v >= 0``
    on the remaining H-cells at every snapshot.
    """
    cells = _cells(region)
    if len(cells) == 0:
        raise EmptyRegion("region has no cells")
    measure = len(cells) * grid.weight
    delta = small_volume_delta(gamma, c_inf, params)
    if measure > delta * (1 + 1e-12):
        raise PreconditionUnmet(f"region measure {measure!r} exceeds delta {delta!r}",
                                hypothesis="volume")
    rmin, rtol = math.nan, math.nan
    if op is not None:
        c = c if c is not None else LinearCoefficient.constant(c_inf)
        r = linear_supersolution_residual(vtraj, c, op, cells, apply=apply)
        rmin = float(r.min())
        scale = float(np.abs(vtraj.U).max())
        rtol = (_consistency_budget(vtraj, cells) + 1e-10 * scale
                if residual_tol is None else residual_tol)
        if rmin < -rtol:
            raise PreconditionUnmet(f"supersolution residual {rmin!r} below -{rtol!r}",
                                    hypothesis="residual")
    H = np.nonzero(grid.points[:, 0] > lam)[0]
    outside = np.setdiff1d(H, cells)
    if len(outside):
        low = float(vtraj.U[:, outside].min())
        if low < -1e-12 * max(1.0, float(np.abs(vtraj.U).max())):
            raise PreconditionUnmet(f"v is negative ({low!r}) on H outside the region",
                                    hypothesis="exterior")
    neg = np.maximum(-vtraj.U[:, H].min(axis=1), 0.0)
    t = vtraj.t - vtraj.t[0]
    bound = slack * np.exp(-gamma * t) * neg[0]
    margin = bound - neg
    rate, _ = fit_decay(vtraj.t, neg)
    holds = bool(np.all(neg <= bound + 1e-300))
    return SmallVolumeVerdict(holds, float(margin.min()), rate, measure, delta, rmin, rtol, neg)


# -- Harnack quotient -----------------------------------------------------------

@dataclass(frozen=True)
class HarnackReport:
    inf_plus: float
    mean_minus: float
    neg_sup: float
    quotient: float
    gap: float


def _dist_to_complement(grid, D, U):
    """Lower estimate of ``dist(D, R^N \\ U)`` for cell sets (half-cell resolution)."""
    pts = grid.points
    rest = np.setdiff1d(np.arange(grid.n), U)
    d = grid.domain.distance_to_boundary(pts[D])
    if len(rest):
        far = np.array([np.sqrt(((pts[rest] - p) ** 2).sum(1)).min() for p in pts[D]])
        d = np.minimum(d, far - 0.5 * grid.h)
    return float(d.min())


def _time_mean(t, vals, ta, tb):
    sel = (t >= ta - 1e-12) & (t <= tb + 1e-12)
    if sel.sum() < 2:
        raise TooShort(f"fewer than two snapshots in [{ta}, {tb}]")
    return float(trapezoid(vals[sel], t[sel]) / (t[sel][-1] - t[sel][0]))


def harnack_quotient(utraj, D, U, t0, tau, grid, r0=None, gap=None):
    """``inf_{T+ x D} u`` over the space-time mean of ``u^+`` on ``T- x D``.

    ``T- = [t0+tau, t0+2tau]``, ``T+ = [t0+3tau, t0+4tau]``.  The sup of
    ``u^-`` on ``[t0, t0+4tau] x U`` is reported alongside (the correction
    term of the estimate).  ``gap`` defaults to ``4 r0``.
    """
    D, U = _cells(D), _cells(U)
    if len(D) == 0:
        raise EmptyRegion("D has no cells")
    if not np.isin(D, U).all():
        raise GeometryViolation("D is not contained in U")
    if gap is None:
        gap = 4 * r0 if r0 is not None else 0.0
    dist = _dist_to_complement(grid, D, U)
    if dist < gap - 1e-12:
        raise GeometryViolation(f"dist(D, boundary of U) = {dist!r} is below {gap!r}")
    if utraj.t[0] > t0 + 1e-12 or utraj.t[-1] < t0 + 4 * tau - 1e-12:
        raise TooShort("trajectory does not cover [t0, t0 + 4 tau]")
    t = utraj.t
    plus = (t >= t0 + 3 * tau - 1e-12) & (t <= t0 + 4 * tau + 1e-12)
    inf_plus = float(utraj.U[plus][:, D].min())
    space_mean = np.maximum(utraj.U[:, D], 0.0).mean(axis=1)
    mean_minus = _time_mean(t, space_mean, t0 + tau, t0 + 2 * tau)
    span = (t >= t0 - 1e-12) & (t <= t0 + 4 * tau + 1e-12)
    neg_sup = float(max(0.0, -utraj.U[span][:, U].min()))
    q = inf_plus / mean_minus if mean_minus > 0 else math.nan
    return HarnackReport(inf_plus, mean_minus, neg_sup, q, dist)


# -- lower bound via the extension subsolution --------------------------------

@dataclass(frozen=True)
class SubsolutionVerdict:
    holds: bool
    min_ratio: float
    q: float
    gamma: float
    samples: int


def verify_subsolution_bound(vtraj, x0, rho, sigma0, sigma1, gamma, eig, grid, q,
                             lam=0.0, t0=None, slack=SLACK, tol=1e-12):
    """Check ``v >= sigma1 e^{-gamma (t-t0)} Psi(x - x0)`` on ``B_rho(x0)``.

    Hypotheses checked first, in order: geometry (``dist(x0, dH) >= 2 rho``),
    (ii) ``v >= 0`` on ``B_2rho``, (iii) the decay of ``v^-`` off
    ``B_2rho`` at rate ``gamma + 1``, (iv) ``v(t0) >= sigma1 Psi`` on
    ``B_rho`` and ``sigma1 >= q sigma0``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    pts = grid.points
    if x0[0] - lam < 2 * rho - 1e-12:
        raise PreconditionUnmet("B_2rho(x0) is not inside H", hypothesis="geometry")
    t = vtraj.t
    if t0 is None:
        t0 = float(t[0])
    keep = t >= t0 - 1e-12
    t, V = t[keep], vtraj.U[keep]
    r = np.sqrt(((pts - x0) ** 2).sum(1))
    H = pts[:, 0] > lam
    near = r < 2 * rho
    ball = np.nonzero(r < rho)[0]
    if len(ball) == 0:
        raise EmptyRegion("no grid cell lies in B_rho(x0)")
    if V[:, near].size and V[:, near].min() < -tol:
        raise PreconditionUnmet("v is negative on B_2rho(x0)", hypothesis="ii")
    off = np.nonzero(H & ~near)[0]
    if len(off):
        neg = np.maximum(-V[:, off].min(axis=1), 0.0)
        env = sigma0 * np.exp(-(gamma + 1) * (t - t0))
        if np.any(neg > env + tol):
            raise PreconditionUnmet("v^- off B_2rho exceeds sigma0 e^{-(gamma+1)(t-t0)}",
                                    hypothesis="iii")
    psi = eig(pts[ball] - x0)
    if np.any(V[0, ball] < sigma1 * psi - tol):
        raise PreconditionUnmet("v(t0) is below sigma1 Psi on B_rho", hypothesis="iv")
    if sigma1 < q * sigma0 * (1 - 1e-12):
        raise PreconditionUnmet(f"sigma1 < q sigma0 with q = {q!r}", hypothesis="iv")
    pos = psi > 0
    lower = sigma1 * np.exp(-gamma * (t - t0))[:, None] * psi[None, pos]
    ratio = V[:, ball[pos]] / lower
    mr = float(ratio.min()) if ratio.size else math.inf
    return SubsolutionVerdict(bool(mr >= 1 / slack), mr, float(q), float(gamma), int(ratio.size))


# -- regularity diagnostics ---------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    sup: float
    t: float
    x: tuple


def boundary_growth(utraj, domain, grid, s, t_min=None):
    """``sup |u(t,x)| / dist(x, dOmega)^s`` over snapshots with ``t >= t_min``."""
    t = utraj.t
    sel = np.ones(len(t), bool) if t_min is None else t >= t_min - 1e-12
    if not sel.any():
        raise TooShort("no snapshot after t_min")
    d = domain.distance_to_boundary(grid.points)
    Q = np.abs(utraj.U[sel]) / d[None, :] ** s
    k = np.unravel_index(int(np.argmax(Q)), Q.shape)
    return GrowthReport(float(Q[k]), float(t[sel][k[0]]), tuple(map(float, grid.points[k[1]])))


def growth_divergent(sup_h, sup_h2, s):
    """Refinement verdict: growth by at least ``2^{s/2}`` under ``h -> h/2``."""
    if sup_h <= 0:
        return sup_h2 > 0
    return bool(sup_h2 / sup_h >= 2 ** (s / 2))


def holder_seminorm(utraj, G, alpha, grid, s, window=None, max_snapshots=40):
    """Parabolic Hoelder quotient ``|du| / (|dx| + |dt|^{1/2s})^alpha`` on ``G``."""
    G = _cells(G)
    if len(G) == 0:
        raise EmptyRegion("G has no cells")
    t = utraj.t
    sel = np.ones(len(t), bool)
    if window is not None:
        sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    idx = np.nonzero(sel)[0]
    if len(idx) == 0:
        raise TooShort("no snapshot in the window")
    if len(idx) > max_snapshots:
        idx = idx[np.unique(np.linspace(0, len(idx) - 1, max_snapshots).round().astype(int))]
    vals = utraj.U[np.ix_(idx, G)].ravel()
    xs = np.tile(grid.points[G], (len(idx), 1))
    ts = np.repeat(t[idx], len(G))
    return float(_core.holder_max(vals, xs, ts, float(alpha), 1.0 / (2 * s)))
