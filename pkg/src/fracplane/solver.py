"""Time integration of the reaction-diffusion problem and its linear comparisons.

``simulate`` is first-order IMEX (backward Euler in the operator, forward in
the reaction); ``mild_solve`` is an independent oracle built on the matrix
exponential.  BLAS is pinned to one thread inside the solvers so that
results are bit-identical whatever the caller's thread settings.
"""
from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, expm, lu_factor, lu_solve
from threadpoolctl import threadpool_limits

from .errors import OutOfRange, PicardDivergence, RangeExit

log = logging.getLogger(__name__)

RANGE_SOFT = 1e-9
RANGE_HARD = 1e-3


@dataclass(frozen=True)
class Nonlinearity:
    """``f(t, x, u)`` vectorised over cells, with admissible range ``(lower, upper)``.

    ``lipschitz(lo, hi)`` returns the declared Lipschitz bound on ``[lo, hi]``.
    """

    func: object
    lower: float = -math.inf
    upper: float = math.inf
    lipschitz: object = None
    name: str = "custom"

    def __call__(self, t, x, u):
        return self.func(t, x, u)


def _coef(mean, amp, period):
    if amp == 0:
        return lambda t: mean
    return lambda t: mean + amp * math.sin(2 * math.pi * t / period)


def allen_cahn(a=1.0, b=1.0, a_amp=0.0, b_amp=0.0, period=1.0):
    """``f(t, u) = a(t) u - b(t) u^3`` with optionally sinusoidal coefficients."""
    at, bt = _coef(a, a_amp, period), _coef(b, b_amp, period)

    def func(t, x, u):
        return at(t) * u - bt(t) * u**3

    def lip(lo, hi):
        # |a - 3 b u^2| is extremal at corners of the (a, b, u^2) box
        hi2 = max(lo * lo, hi * hi)
        lo2 = 0.0 if lo <= 0 <= hi else min(lo * lo, hi * hi)
        return max(abs(ai - 3 * bi * q)
                   for ai in (a - abs(a_amp), a + abs(a_amp))
                   for bi in (b - abs(b_amp), b + abs(b_amp))
                   for q in (lo2, hi2))

    return Nonlinearity(func, lipschitz=lip, name="allen-cahn")


def zero_nonlinearity():
    return Nonlinearity(lambda t, x, u: np.zeros_like(u), lipschitz=lambda lo, hi: 0.0, name="zero")


def linear_nonlinearity(coef):
    """``f = c(t, x) u`` for a LinearCoefficient."""
    return Nonlinearity(lambda t, x, u: coef(t, x) * u,
                        lipschitz=lambda lo, hi: coef.c_inf, name="linear")


@dataclass(frozen=True)
class LinearCoefficient:
    func: object
    c_inf: float

    def __call__(self, t, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.func(t, x), dtype=float), (len(x),))

    @classmethod
    def constant(cls, c):
        return cls(lambda t, x: np.full(len(x), float(c)), abs(float(c)))


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    dt: float
    scheme: str

    def __post_init__(self):
        if self.U.ndim != 2 or len(self.t) != len(self.U):
            raise ValueError("trajectory arrays have inconsistent shapes")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("time stamps must increase strictly")

    def __len__(self):
        return len(self.t)

    @property
    def n(self):
        return self.U.shape[1]

    def window(self, ta, tb):
        m = (self.t >= ta - 1e-12) & (self.t <= tb + 1e-12)
        return Trajectory(self.t[m], self.U[m], self.dt, self.scheme)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [f"u{i}" for i in range(self.n)])
            for t, row in zip(self.t, self.U):
                wr.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, dt=0.0, scheme="imex"):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], dtype=float)
        return cls(data[:, 0].copy(), data[:, 1:].copy(), dt, scheme)

    def to_binary(self, path):
        """``<u64 n><u64 count>`` then per snapshot ``t, u_0 .. u_{n-1}`` as LE doubles."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQ", self.n, len(self.t)))
            block = np.concatenate([self.t[:, None], self.U], axis=1)
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path, dt=0.0, scheme="imex"):
        with open(path, "rb") as fh:
            n, count = struct.unpack("<QQ", fh.read(16))
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(count, n + 1)
        return cls(data[:, 0].copy(), data[:, 1:].copy(), dt, scheme)


def default_dt(h, s):
    return min(h ** min(2 * s, 1.0), 1e-2)


def _range_check(u, f):
    lo, hi = f.lower, f.upper
    if not (math.isfinite(lo) or math.isfinite(hi)):
        if not np.all(np.isfinite(u)):
            raise RangeExit("state is no longer finite")
        return u
    over = max(float(np.max(lo - u)), float(np.max(u - hi)), 0.0)
    if over > RANGE_HARD:
        raise RangeExit(f"state left the admissible range by {over:.3g}")
    if over > RANGE_SOFT:
        log.warning("state grazes the admissible range by %.3g", over)
    return u


class IMEXStepper:
    """``u+ = (I + dt A)^{-1} (u + dt f(t, x, u))`` with a reusable factorisation."""

    def __init__(self, op, dt):
        if not dt > 0:
            raise OutOfRange("dt must be positive")
        self.op = op
        self.dt = float(dt)
        M = np.eye(op.n) + self.dt * np.asarray(op.A)
        with threadpool_limits(limits=1):
            self._fac = cho_factor(M, lower=False)
        self.points = op.grid.points

    def step(self, u, t, f):
        rhs = u + self.dt * f(t, self.points, u)
        with threadpool_limits(limits=1):
            out = cho_solve(self._fac, rhs)
        return _range_check(out, f)


def step(u, t, dt, op, f):
    """One IMEX step (factorises on every call; use IMEXStepper for loops)."""
    return IMEXStepper(op, dt).step(np.asarray(u, dtype=float), t, f)


def simulate(op, f, u0, T, dt, save_every=1, t0=0.0, stepper=None):
    """Advance from ``t0`` to ``t0 + T``; snapshots every ``save_every`` steps."""
    nsteps = int(round(T / dt))
    if not math.isclose(nsteps * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise OutOfRange("T must be a multiple of dt")
    st = stepper or IMEXStepper(op, dt)
    u = np.array(u0, dtype=float)
    ts, snaps = [t0], [u.copy()]
    for k in range(nsteps):
        u = st.step(u, t0 + k * dt, f)
        if (k + 1) % save_every == 0 or k + 1 == nsteps:
            ts.append(t0 + (k + 1) * dt)
            snaps.append(u.copy())
    return Trajectory(np.array(ts), np.array(snaps), dt, "imex")


def mild_solve(u0, T, op, f, K, maxiter=200, tol=1e-13, cap=2000):
    """Picard iteration of the variation-of-constants formula.

    On a uniform mesh of K substeps the forcing in the Duhamel integral is
    frozen at each substep midpoint and the kernel integrated exactly,
    ``u_{k+1} = E u_k + Phi F(t_{k+1/2}, (u_k + u_{k+1}) / 2)``,
    with ``E = exp(-d A)`` from scaling and squaring and
    ``Phi = A^{-1} (I - E)``.  Constant forcing is therefore reproduced
    exactly.  Each Picard sweep updates the whole trajectory from the
    previous one.
    """
    A = np.asarray(op.A)
    n = A.shape[0]
    if n > cap:
        raise OutOfRange(f"mild_solve is limited to n <= {cap}")
    d = T / K
    pts = op.grid.points
    with threadpool_limits(limits=1):
        E = expm(-d * A)
        Phi = np.linalg.solve(A, np.eye(n) - E)
        ts = np.linspace(0.0, T, K + 1)
        U = np.empty((K + 1, n))
        U[0] = u0
        for k in range(K):  # linear propagation as the starting iterate
            U[k + 1] = E @ U[k]
        last = math.inf
        rising = 0
        for it in range(maxiter):
            mid = 0.5 * (U[:-1] + U[1:])
            F = np.array([f(ts[k] + 0.5 * d, pts, mid[k]) for k in range(K)])
            forced = F @ Phi.T
            new = np.empty_like(U)
            new[0] = u0
            for k in range(K):
                new[k + 1] = E @ new[k] + forced[k]
            diff = float(np.abs(new - U).max())
            U = new
            if not np.isfinite(diff):
                raise PicardDivergence("Picard iterates are not finite")
            if diff <= tol * max(1.0, float(np.abs(U).max())):
                break
            rising = rising + 1 if diff > last else 0
            if rising >= 3:
                raise PicardDivergence(f"Picard iterates stopped contracting at sweep {it}")
            last = diff
        else:
            raise PicardDivergence("Picard iteration hit the sweep limit")
    return Trajectory(ts, U, d, "mild")


@dataclass(frozen=True)
class HypothesisReport:
    lipschitz_measured: float
    lipschitz_declared: float
    f1_holds: bool
    f2_holds: bool
    f2_worst: float
    f2_witness: tuple

    @property
    def holds(self):
        return self.f1_holds and self.f2_holds


def _sample_domain(domain, m, rng):
    lo = np.array([b[0] for b in domain.bounds])
    hi = np.array([b[1] for b in domain.bounds])
    out = np.empty((0, domain.dim))
    while len(out) < m:
        cand = lo + (hi - lo) * rng.random((2 * m, domain.dim))
        out = np.concatenate([out, cand[domain.contains(cand)]])
    return out[:m]


def check_F_hypotheses(f, domain, samples=2000, K=(-1.0, 1.0), t_range=(0.0, 10.0), seed=0):
    """Sampled (F1) Lipschitz and (F2) symmetry/monotonicity checks on ``K``."""
    rng = np.random.default_rng(seed)
    lo = max(K[0], f.lower)
    hi = min(K[1], f.upper)
    x = _sample_domain(domain, samples, rng)
    t = t_range[0] + (t_range[1] - t_range[0]) * rng.random(samples)
    u = lo + (hi - lo) * rng.random(samples)
    v = lo + (hi - lo) * rng.random(samples)
    fu = np.array([f(t[i], x[i:i + 1], u[i:i + 1])[0] for i in range(samples)])
    fv = np.array([f(t[i], x[i:i + 1], v[i:i + 1])[0] for i in range(samples)])
    # include the endpoints, where polynomial slopes peak
    lip = float(np.max(np.abs(fu - fv) / np.maximum(np.abs(u - v), 1e-300)))
    for a, b in ((lo, lo + 1e-6 * (hi - lo)), (hi - 1e-6 * (hi - lo), hi)):
        fa = f(t[0], x[:1], np.array([a]))[0]
        fb = f(t[0], x[:1], np.array([b]))[0]
        lip = max(lip, abs(fa - fb) / (b - a))
    declared = float(f.lipschitz(lo, hi)) if f.lipschitz is not None else math.inf
    sig = -1.0 + 2.0 * rng.random(samples)
    xs = x.copy()
    xs[:, 0] *= sig
    fs = np.array([f(t[i], xs[i:i + 1], u[i:i + 1])[0] for i in range(samples)])
    gap = fs - fu  # must be >= 0
    k = int(np.argmin(gap))
    worst = float(gap[k])
    witness = (float(t[k]), tuple(map(float, x[k])), float(sig[k]), float(u[k]))
    return HypothesisReport(lip, declared, lip <= 1.01 * declared, worst >= -1e-12, worst, witness)


def time_derivative(traj):
    """Centred differences in time, one-sided at the ends."""
    return np.gradient(traj.U, traj.t, axis=0, edge_order=1)


def linear_supersolution_residual(v, c, op, region, apply=None, g=None):
    """``r = d_t v + (-Delta)^s v - c v - g`` on the region cells, per snapshot.

    ``apply(U)`` returns the operator applied to every snapshot (rows of
    ``U``); the default uses ``op.A`` with zero exterior data.  Callers
    holding v with nonzero exterior values (reflection differences) pass
    their own.
    """
    region = np.asarray(region)
    if len(v.t) > 2:
        steps = np.diff(v.t)
        if not np.allclose(steps, steps[0], rtol=1e-6):
            raise OutOfRange("linear_supersolution_residual needs uniform time steps")
    dv = time_derivative(v)
    AV = apply(v.U) if apply is not None else v.U @ np.asarray(op.A).T
    pts = op.grid.points
    cv = np.array([c(t, pts) for t in v.t]) * v.U
    r = dv + AV - cv
    if g is not None:
        r = r - np.array([g(t, pts) for t in v.t])
    return r[:, region]


def solve_antisymmetric_linear(op, region, lam, c, v0, exterior, T, dt, t0=0.0):
    """Linear problem ``d_t v + (-Delta)^s v = c v`` on ``region`` for odd ``v``.

    ``v`` is odd about ``x_1 = lam`` on mirror cell pairs; on the H-cells
    outside the region it is prescribed by ``exterior(t)`` (a full grid
    function whose H-part is used).  The region is advanced with the IMEX
    step; everything else follows by prescription and odd reflection.
    """
    grid = op.grid
    mirror = grid.mirror_index(lam)
    region = np.asarray(region)
    x1 = grid.points[:, 0]
    if np.any(x1[region] <= lam) or np.any(mirror[region] < 0):
        raise OutOfRange("region must consist of H-cells with exact mirrors")
    inU = np.zeros(grid.n, dtype=bool)
    inU[region] = True
    A = np.asarray(op.A)
    M = np.eye(len(region)) + dt * A[np.ix_(region, region)]
    coupling = A[np.ix_(region, np.nonzero(~inU)[0])]
    rest = np.nonzero(~inU)[0]
    with threadpool_limits(limits=1):
        fac = lu_factor(M)

    def fill(vU, t):
        full = np.asarray(exterior(t), dtype=float).copy()
        full[region] = vU
        low = x1 <= lam
        ok = low & (mirror >= 0)
        full[ok] = -full[mirror[ok]]
        full[low & (mirror < 0)] = 0.0
        return full

    nsteps = int(round(T / dt))
    pts = grid.points
    v = fill(np.asarray(v0, dtype=float)[region], t0)
    ts, snaps = [t0], [v.copy()]
    for k in range(nsteps):
        t = t0 + k * dt
        nxt = fill(v[region], t + dt)
        rhs = v[region] + dt * c(t, pts[region]) * v[region] - dt * coupling @ nxt[rest]
        with threadpool_limits(limits=1):
            vU = lu_solve(fac, rhs)
        v = fill(vU, t + dt)
        ts.append(t + dt)
        snaps.append(v.copy())
    return Trajectory(np.array(ts), np.array(snaps), dt, "imex-linear")
