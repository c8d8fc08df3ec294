"""Phases of a run: assemble, simulate, sweep, verify, report.

Every phase reads what earlier phases left in the output directory and
rewrites ``manifest.txt`` (config echo, version, phase timings and the
sha256 of every emitted file).  Numeric outputs depend only on the config
and the seed, never on the thread count.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, _core
from .analysis import (boundary_growth, classify_series, holder_seminorm, lambda_grid, lambda_sweep,
                       omega_limit, profile_verdict)
from .config import RunConfig
from .errors import (ConfigError, ConvergenceFailure, NumericalFailure, PicardDivergence,
                     QuadratureFailure, RangeExit)
from .fracops import FracParams, NonlocalOperator, assemble_operator, load_matrix
from .geometry import Domain, Grid
from .solver import (LinearCoefficient, Trajectory, allen_cahn, linear_nonlinearity, simulate,
                     zero_nonlinearity)

log = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
OPERATOR = "operator.bin"
VERDICTS = "verdicts.csv"
SUMMARY = "summary.txt"
_GEOMETRY_KEYS = ("domain", "extent", "h", "s")
_NUMERICAL = (RangeExit, PicardDivergence, ConvergenceFailure, QuadratureFailure)


# -- setup ----------------------------------------------------------------------

def build_domain(cfg):
    e = cfg.extent
    if cfg.domain == "interval":
        return Domain.interval(*e)
    if cfg.domain == "rectangle":
        return Domain.rectangle((e[0], e[1]), (e[2], e[3]))
    return Domain.disk(e[0])


def setup(cfg):
    domain = build_domain(cfg)
    grid = Grid.build(domain, cfg.h)
    params = FracParams(grid.dim, cfg.s)
    return domain, grid, params


def nonlinearity(cfg):
    if cfg.nonlinearity == "allen-cahn":
        return allen_cahn(cfg.a, cfg.b, cfg.a_amp, cfg.b_amp, cfg.period)
    if cfg.nonlinearity == "zero":
        return zero_nonlinearity()
    return linear_nonlinearity(LinearCoefficient.constant(cfg.coef))


def initial_datum(cfg, domain, grid, seed=None):
    """``tent``: ``amplitude dist(x) (1 + asymmetry x_1)``; ``random``: a
    positive seeded sum of Gaussians times ``dist(x)``, scaled to
    ``amplitude``.  Both are clipped to [0, 1]."""
    d = domain.distance_to_boundary(grid.points)
    if cfg.initial == "tent":
        u = cfg.amplitude * d * (1 + cfg.asymmetry * grid.points[:, 0])
    else:
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        lo, hi = grid.points.min(0), grid.points.max(0)
        g = np.zeros(grid.n)
        for _ in range(4):
            c = rng.uniform(lo, hi)
            w = rng.uniform(0.1, 0.5) * (hi - lo).max()
            g += rng.uniform(0.2, 1.0) * np.exp(-((grid.points - c) ** 2).sum(1) / (2 * w * w))
        u = d * g
        u *= cfg.amplitude / u.max()
    return np.clip(u, 0.0, 1.0)


# -- files ------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def read_manifest(out):
    path = os.path.join(out, MANIFEST)
    info = {"config": {}, "phases": {}, "files": {}}
    if not os.path.exists(path):
        return info
    section = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1]
            elif section in ("config", "phases") and " = " in line:
                k, v = line.split(" = ", 1)
                info[section][k] = v
            elif section == "files" and "  " in line:
                digest, name = line.split("  ", 1)
                info["files"][name] = digest
    return info


def write_manifest(out, cfg, phase, seconds):
    info = read_manifest(out)
    info["phases"][phase] = f"{seconds:.3f}"
    files = sorted(f for f in os.listdir(out)
                   if f != MANIFEST and os.path.isfile(os.path.join(out, f)))
    lines = [f"fracplane {__version__}", f"backend = {_core.BACKEND}", "[config]"]
    lines += cfg.echo()
    lines.append("[phases]")
    lines += [f"{k} = {v}" for k, v in info["phases"].items()]
    lines.append("[files]")
    lines += [f"{_sha256(os.path.join(out, f))}  {f}" for f in files]
    with open(os.path.join(out, MANIFEST), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _geometry_matches(out, cfg):
    old = read_manifest(out)["config"]
    new = dict(line.split(" = ", 1) for line in cfg.echo())
    return all(old.get(k) == new[k] for k in _GEOMETRY_KEYS)


def trajectory_path(out, cfg):
    return os.path.join(out, "trajectory.csv" if cfg.trajectory_format == "csv" else "trajectory.bin")


def load_trajectory(out, cfg):
    path = trajectory_path(out, cfg)
    if not os.path.exists(path):
        raise ConfigError(f"trajectory: {path} does not exist; run the simulate phase first")
    if cfg.trajectory_format == "csv":
        return Trajectory.from_csv(path, dt=cfg.dt)
    return Trajectory.from_binary(path, dt=cfg.dt)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def decay_name(lam):
    return f"decay_{float(lam)!r}.csv"


# -- phases ----------------------------------------------------------------------

def _timed(phase):
    def deco(fn):
        def inner(cfg, out, threads=1):
            os.makedirs(out, exist_ok=True)
            t0 = time.perf_counter()
            try:
                res = fn(cfg, out, threads)
            except _NUMERICAL as exc:
                raise NumericalFailure(f"{phase}: {exc}") from exc
            write_manifest(out, cfg, phase, time.perf_counter() - t0)
            return res
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return deco


def operator_for(cfg, out):
    domain, grid, params = setup(cfg)
    path = os.path.join(out, OPERATOR)
    if os.path.exists(path) and _geometry_matches(out, cfg):
        A = load_matrix(path)
        if A.shape[0] == grid.n:
            return NonlocalOperator(grid, params, A, None, math.nan, math.nan)
    return assemble_operator(grid, domain, params)


@_timed("assemble")
def assemble(cfg, out, threads=1):
    """Assemble the operator and store it as ``operator.bin``."""
    domain, grid, params = setup(cfg)
    op = assemble_operator(grid, domain, params)
    op.dump(os.path.join(out, OPERATOR))
    return op


@_timed("simulate")
def run_simulation(cfg, out, threads=1):
    """Simulate from the configured initial datum; write the trajectory."""
    op = operator_for(cfg, out)
    domain = build_domain(cfg)
    u0 = initial_datum(cfg, domain, op.grid)
    traj = simulate(op, nonlinearity(cfg), u0, cfg.T, cfg.dt, save_every=cfg.save_every)
    path = trajectory_path(out, cfg)
    if cfg.trajectory_format == "csv":
        traj.to_csv(path)
    else:
        traj.to_binary(path)
    return traj


@_timed("sweep")
def sweep(cfg, out, threads=1):
    """Monitor ``(S_lam)`` over the lambda grid; one decay CSV per lambda."""
    _, grid, _ = setup(cfg)
    traj = load_trajectory(out, cfg)
    lams = lambda_grid(grid.domain.max_x1, cfg.lambda_count)
    res = lambda_sweep(traj, grid, lams, cfg.threshold, cfg.burn_in, threads=threads)
    for lam in res.lams:
        rep = res.reports[lam]
        _write_rows(os.path.join(out, decay_name(lam)), ["t", "neg"], zip(rep.t, rep.series))
    return res


def _read_decay(out, lam):
    path = os.path.join(out, decay_name(lam))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return data[:, 0], data[:, 1]


def _sweep_rows(cfg, out, grid):
    lams = lambda_grid(grid.domain.max_x1, cfg.lambda_count)
    reports = {lam: classify_series(*_read_decay(out, lam), cfg.threshold, 0.0, lam) for lam in lams}
    lam0 = grid.domain.max_x1
    for lam in reversed(lams):
        if not reports[lam].holds:
            break
        lam0 = lam
    spacing = lams[1] - lams[0]
    rows = [("S_lambda=" + repr(lam), reports[lam].verdict.upper(), reports[lam].tail_sup, cfg.threshold)
            for lam in lams]
    ok = lam0 <= spacing + 1e-12
    rows.append(("lambda0", "PASS" if ok else "FAIL", spacing - lam0, spacing))
    return rows


@_timed("verify")
def verify(cfg, out, threads=1):
    """Omega-limit profiles, symmetry verdicts and regularity diagnostics."""
    domain, grid, params = setup(cfg)
    traj = load_trajectory(out, cfg)
    rows = []
    if "sweep" in cfg.checks:
        lams = lambda_grid(domain.max_x1, cfg.lambda_count)
        if not all(os.path.exists(os.path.join(out, decay_name(l))) for l in lams):
            raise ConfigError("sweep: decay CSVs are missing; run the sweep phase first")
        rows += _sweep_rows(cfg, out, grid)
    if "symmetry" in cfg.checks:
        om = omega_limit(traj, cfg.window, cfg.omega_tol)
        sym_tol = cfg.sym_tol
        if math.isnan(sym_tol):
            sym_tol = max(5 * grid.h, 1e-4 if grid.dim == 1 else 1e-3)
        zero_tol = 1e-6 * float(np.abs(traj.U[0]).max())
        job = lambda z: profile_verdict(z, grid, sym_tol, zero_tol)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                verdicts = list(ex.map(job, om.profiles))
        else:
            verdicts = [job(z) for z in om.profiles]
        coords = [f"x{k + 1}" for k in range(grid.dim)]
        for i, (z, pv) in enumerate(zip(om.profiles, verdicts)):
            _write_rows(os.path.join(out, f"omega_{i}.csv"), coords + ["z"],
                        (list(p) + [v] for p, v in zip(grid.points, z)))
            branch = "zero" if pv.zero and not pv.decreasing else "decreasing"
            rows.append((f"symmetry_{i}[{branch}]", "PASS" if pv.passes else "FAIL",
                         sym_tol - pv.evenness, sym_tol))
        rows.append(("omega_settled", "INFO", float(om.settled), cfg.omega_tol))
    if "growth" in cfg.checks:
        g = boundary_growth(traj, domain, grid, cfg.s, t_min=cfg.regularity_t0)
        rows.append(("boundary_growth", "PASS" if math.isfinite(g.sup) else "FAIL", g.sup, math.inf))
    if "holder" in cfg.checks:
        G = np.nonzero(np.abs(grid.points).max(1) <= cfg.holder_region + 1e-12)[0]
        win = (cfg.regularity_t0, min(cfg.regularity_t0 + 1.0, traj.t[-1]))
        hs = holder_seminorm(traj, G, cfg.s / 2, grid, cfg.s, window=win)
        rows.append(("holder", "PASS" if math.isfinite(hs) else "FAIL", hs, math.inf))
    _write_rows(os.path.join(out, VERDICTS), ["check", "verdict", "margin", "tolerance"], rows)
    return rows


def read_verdicts(out):
    path = os.path.join(out, VERDICTS)
    if not os.path.exists(path):
        raise ConfigError(f"verdicts: {path} does not exist; run the verify phase first")
    with open(path, newline="") as fh:
        return list(csv.reader(fh))[1:]


@_timed("report")
def report(cfg, out, threads=1):
    """Summary text regenerated from ``verdicts.csv`` (byte-stable)."""
    rows = read_verdicts(out)
    width = max(len(r[0]) for r in rows) if rows else 5
    lines = [f"{'check':<{width}}  verdict       margin    tolerance"]
    for name, verdict, margin, tol in rows:
        lines.append(f"{name:<{width}}  {verdict:<12} {float(margin):>10.4g} {float(tol):>10.4g}")
    failed = sum(r[1] == "FAIL" for r in rows)
    lines.append(f"{len(rows)} checks, {failed} failed")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, SUMMARY), "w") as fh:
        fh.write(text)
    return text


def failures(out):
    return [r[0] for r in read_verdicts(out) if r[1] == "FAIL"]


def run(cfg: RunConfig, out, threads=1):
    """All phases in order; returns the summary text."""
    assemble(cfg, out, threads)
    run_simulation(cfg, out, threads)
    if "sweep" in cfg.checks:
        sweep(cfg, out, threads)
    verify(cfg, out, threads)
    return report(cfg, out, threads)

