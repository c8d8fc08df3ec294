"""Moving-plane monitoring: (S_lam) decay, omega-limits and symmetry verdicts."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import TooShort
from .reflection import reflect_diff, reflect_diff_series

TIE_TOL = 1e-8
STRICT_TOL = 1e-6


@dataclass(frozen=True)
class DecayReport:
    lam: float
    t: np.ndarray = field(repr=False)
    series: np.ndarray = field(repr=False)
    rate: float
    residual: float
    tail_sup: float
    threshold: float
    verdict: str

    @property
    def holds(self):
        return self.verdict == "holds"


def fit_decay(t, series):
    """Least-squares fit of ``log series = a - rate t`` on the positive samples.

    Returns ``(rate, rms residual)``; an all-zero series decays at rate inf.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    pos = y > 0
    if not pos.any():
        return math.inf, 0.0
    if pos.sum() < 2:
        return (math.inf if y[-1] == 0 else 0.0), 0.0
    A = np.stack([np.ones(pos.sum()), -t[pos]], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(y[pos]), rcond=None)
    res = np.log(y[pos]) - A @ coef
    return float(coef[1]), float(np.sqrt(np.mean(res**2)))


def classify_series(t, series, threshold=1e-6, burn_in=0.0, lam=math.nan):
    """Verdict for a negative-part series ``||(V u)^-(t)||``.

    The tail is the second half of the post burn-in span.  ``holds``: the
    tail stays below ``threshold`` and the fitted rate is positive (or the
    tail vanishes).  ``fails``: no decay over the tail (less than one e-fold)
    while above threshold.  Otherwise ``inconclusive``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    keep = t >= t[0] + burn_in - 1e-12
    if keep.sum() < 3:
        raise TooShort("trajectory does not extend past the burn-in")
    t, y = t[keep], y[keep]
    mid = t[0] + 0.5 * (t[-1] - t[0])
    tail = t >= mid - 1e-12
    tail_sup = float(y[tail].max())
    rate, resid = fit_decay(t[tail], y[tail])
    span = t[tail][-1] - t[tail][0]
    if tail_sup == 0.0:
        verdict = "holds"
    elif tail_sup <= threshold and rate > 0:
        verdict = "holds"
    elif tail_sup > threshold and rate * span < 1.0:
        verdict = "fails"
    else:
        verdict = "inconclusive"
    return DecayReport(float(lam), t, y, rate, resid, tail_sup, threshold, verdict)


def monitor_S(traj, lam, grid, threshold=1e-6, burn_in=0.0):
    """Track ``||(V_lam u)^-(t)||_inf`` over H_lam and classify its decay."""
    if len(traj) < 3:
        raise TooShort("need at least three snapshots")
    _, V = reflect_diff_series(traj.U, lam, grid)
    series = np.maximum(-V.min(axis=1), 0.0)
    return classify_series(traj.t, series, threshold, burn_in, lam)


@dataclass(frozen=True)
class SweepResult:
    reports: dict
    lam0: float
    spacing: float

    @property
    def lams(self):
        return sorted(self.reports)


def lambda_grid(l, count=16):
    """``lam_k = k l / count`` for ``k = 0 .. count-1``."""
    return [k * l / count for k in range(count)]


def lambda_sweep(traj, grid, lams, threshold=1e-6, burn_in=0.0, threads=1):
    """monitor_S for every lam; ``lam0`` is the smallest grid lam above which all hold."""
    lams = sorted(float(x) for x in lams)
    job = lambda lam: monitor_S(traj, lam, grid, threshold, burn_in)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(job, lams))
    else:
        reps = [job(lam) for lam in lams]
    reports = dict(zip(lams, reps))
    lam0 = grid.domain.max_x1
    for lam in reversed(lams):
        if not reports[lam].holds:
            break
        lam0 = lam
    spacing = lams[1] - lams[0] if len(lams) > 1 else math.nan
    return SweepResult(reports, lam0, spacing)


# -- omega-limits ------------------------------------------------------------

@dataclass(frozen=True)
class OmegaSet:
    profiles: list = field(repr=False)
    times: list
    distances: np.ndarray = field(repr=False)
    window: tuple
    tol: float
    settled: bool
    diameters: list


def omega_limit(traj, window, tol):
    """Cluster the window's snapshots by sup-distance.

    Greedy: each snapshot joins the first representative within ``tol/2``,
    so every cluster has sup-diameter at most ``tol``.  ``settled`` reports
    whether consecutive snapshots in the window's last half differ by at
    most ``tol``.
    """
    ta, tb = window
    if ta < traj.t[0] - 1e-12 or tb > traj.t[-1] + 1e-12 or tb <= ta:
        raise TooShort("window lies outside the trajectory span")
    w = traj.window(ta, tb)
    if len(w) == 0:
        raise TooShort("no snapshots in the window")
    reps, times, members = [], [], []
    for t, u in zip(w.t, w.U):
        for k, r in enumerate(reps):
            if np.abs(u - r).max() <= 0.5 * tol:
                members[k].append(u)
                break
        else:
            reps.append(u.copy())
            times.append(float(t))
            members.append([u])
    D = np.array([[np.abs(a - b).max() for b in reps] for a in reps])
    diam = []
    for mem in members:
        M = np.array(mem)
        diam.append(float((M.max(0) - M.min(0)).max()))
    late = w.U[len(w.U) // 2:]
    settled = bool(len(late) < 2 or np.abs(np.diff(late, axis=0)).max() <= tol)
    return OmegaSet(reps, times, D, (float(ta), float(tb)), float(tol), settled, diam)


# -- symmetry verdicts --------------------------------------------------------

@dataclass(frozen=True)
class ProfileVerdict:
    evenness: float
    evenness_witness: tuple
    decreasing: bool
    worst_step: float
    ties: int
    zero: bool
    exempt_rows: int
    sym_tol: float
    passes: bool


def _columns(grid):
    """Group Omega-cells by their transverse coordinates."""
    if grid.dim == 1:
        return [np.arange(grid.n)]
    key = np.round(grid.points[:, 1:] / grid.h, 6)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    return [np.nonzero(inv == k)[0] for k in range(inv.max() + 1)]


def profile_verdict(z, grid, sym_tol, zero_tol, tie_tol=TIE_TOL, strict_tol=STRICT_TOL):
    z = np.asarray(z, dtype=float)
    V = reflect_diff(z, 0.0, grid)
    full = np.abs(V.values)
    k = int(np.argmax(full)) if len(full) else 0
    even = float(full.max()) if len(full) else 0.0
    witness = tuple(map(float, grid.points[V.cells[k]])) if len(full) else ()
    decreasing = True
    worst = math.inf
    ties = 0
    exempt = 0
    x1 = grid.points[:, 0]
    for col in _columns(grid):
        for side in (x1[col] >= 0, x1[col] <= 0):
            cells = col[side]
            if len(cells) < 2:
                exempt += 1
                continue
            order = cells[np.argsort(np.abs(x1[cells]), kind="stable")]
            steps = z[order[:-1]] - z[order[1:]]
            worst = min(worst, float(steps.min()))
            ties += int(np.sum(np.abs(steps) <= tie_tol))
            if steps.min() < -tie_tol or z[order[0]] - z[order[-1]] <= strict_tol:
                decreasing = False
    zero = bool(np.abs(z).max() <= zero_tol)
    passes = even <= sym_tol and (decreasing or zero)
    return ProfileVerdict(even, witness, decreasing, worst, ties, zero, exempt, sym_tol, passes)


def symmetry_verdict(omega, grid, u0_sup, sym_tol=None, zero_tol=None):
    """Per-profile verdict: even in x_1 and (strictly decreasing in |x_1| or zero)."""
    if sym_tol is None:
        sym_tol = max(5 * grid.h, 1e-4)
    if zero_tol is None:
        zero_tol = 1e-6 * u0_sup
    return [profile_verdict(z, grid, sym_tol, zero_tol) for z in omega.profiles]


# -- fixed-profile probes ----------------------------------------------------

def infimum_on_cap(z, lam, grid):
    """``I_lam = inf_{Omega_lam} V_lam z``."""
    return float(reflect_diff(z, lam, grid).values.min())


@dataclass(frozen=True)
class ContinuityProbe:
    lam: float
    eps: np.ndarray
    gaps: np.ndarray
    left_continuous: bool


def left_continuity_probe(z, lam, grid, eps0=None, levels=6, tol=None):
    """Check ``I_{lam - eps} -> I_lam`` as ``eps -> 0`` on a refining lam grid.

    The default ``eps0`` stays below the nearest cell centre under ``lam``, so
    the cap's cell set is fixed along the probe and the gaps must shrink.
    """
    if eps0 is None:
        x1 = grid.points[:, 0]
        below = x1[x1 < lam - 1e-12]
        eps0 = 0.5 * (lam - below.max()) if len(below) else grid.h
    eps = eps0 * 2.0 ** -np.arange(levels)
    I0 = infimum_on_cap(z, lam, grid)
    gaps = np.array([abs(infimum_on_cap(z, lam - e, grid) - I0) for e in eps])
    if tol is None:
        tol = 1e-8 + 2 * grid.h * max(1.0, float(np.abs(z).max()))
    mono = np.all(np.diff(gaps) <= 1e-12 + 1e-9 * gaps[:-1])
    return ContinuityProbe(float(lam), eps, gaps, bool(mono and gaps[-1] <= tol))


def positivity_alternative(z, grid, lams, tol=None):
    """Classify each lam as 'positive', 'zero' or 'mixed' for the profile z."""
    z = np.asarray(z, dtype=float)
    if tol is None:
        tol = 1e-6 * max(float(np.abs(z).max()), 1e-300)
    out = {}
    for lam in lams:
        V = reflect_diff(z, lam, grid).values
        if np.abs(V).max() < tol:
            out[float(lam)] = "zero"
        elif V.min() > tol:
            out[float(lam)] = "positive"
        else:
            out[float(lam)] = "mixed"
    return out
