"""Reflection differences ``V_lam u = u o Q_lam - u`` on grids."""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..errors import EmptyCap
from ..geometry import reflect


def reflection_matrix(grid, lam):
    """Sparse ``R`` with ``(R u)_i = u(Q_lam x_i)`` for every Omega-cell ``i``.

    Exact mirrors are copied; otherwise (bi)linear interpolation of the
    zero-extended grid function, with cells outside Omega counting as 0.
    """
    key = (id(grid), float(lam))
    with _LOCK:
        hit = _CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    R = _reflection_matrix(grid, float(lam))
    with _LOCK:
        _CACHE[key] = (grid, R)
        while len(_CACHE) > 64:
            _CACHE.popitem(last=False)
    return R


_CACHE = OrderedDict()
_LOCK = threading.Lock()


def _reflection_matrix(grid, lam):
    n, h = grid.n, grid.h
    mirror = grid.mirror_index(lam)
    pos = np.full(len(grid.centers), -1)
    pos[grid.omega] = np.arange(n)
    rows, cols, vals = [], [], []
    exact = mirror >= 0
    rows.append(np.nonzero(exact)[0])
    cols.append(mirror[exact])
    vals.append(np.ones(exact.sum()))
    todo = np.nonzero(~exact)[0]
    if len(todo):
        q = reflect(grid.points[todo], lam)
        base, frac = [], []
        for ax in range(grid.dim):
            k = (q[:, ax] - grid.axes[ax][0]) / h
            k0 = np.floor(k).astype(int)
            base.append(k0)
            frac.append(k - k0)
        for corner in range(2**grid.dim):
            wgt = np.ones(len(todo))
            idx = []
            for ax in range(grid.dim):
                bit = (corner >> ax) & 1
                wgt = wgt * (frac[ax] if bit else 1.0 - frac[ax])
                idx.append(base[ax] + bit)
            ok = np.ones(len(todo), dtype=bool)
            for ax in range(grid.dim):
                ok &= (idx[ax] >= 0) & (idx[ax] < grid.shape[ax])
            flat = np.full(len(todo), -1)
            flat[ok] = np.ravel_multi_index(tuple(i[ok] for i in idx), grid.shape)
            tgt = np.where(ok, pos[np.maximum(flat, 0)], -1)
            keep = (tgt >= 0) & (wgt > 0)
            rows.append(todo[keep])
            cols.append(tgt[keep])
            vals.append(wgt[keep])
    R = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
    return R


@dataclass(frozen=True)
class ReflectionDiff:
    lam: float
    cells: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def negative_sup(self):
        return float(max(0.0, -self.values.min())) if len(self.values) else 0.0


def reflect_diff(u, lam, grid):
    """``V_lam u`` on the Omega-cells of ``H_lam``."""
    cells = np.nonzero(grid.points[:, 0] > lam)[0]
    if len(cells) == 0:
        raise EmptyCap(f"no Omega-cell lies in x_1 > {lam}")
    R = reflection_matrix(grid, lam)
    u = np.asarray(u, dtype=float)
    return ReflectionDiff(float(lam), cells, (R @ u)[cells] - u[cells])


def reflect_diff_series(U, lam, grid):
    """``V_lam u`` for every snapshot row of ``U``; returns (cells, values)."""
    cells = np.nonzero(grid.points[:, 0] > lam)[0]
    if len(cells) == 0:
        raise EmptyCap(f"no Omega-cell lies in x_1 > {lam}")
    R = reflection_matrix(grid, lam)
    RU = (R @ np.asarray(U, dtype=float).T).T
    return cells, RU[:, cells] - U[:, cells]


def reflected_operator_values(op, lam, U):
    """``(-Delta)^s V_lam u`` per snapshot row of ``U``.

    Uses ``(-Delta)^s (u o Q) = ((-Delta)^s u) o Q``, exact on cells whose
    mirror is an Omega-cell; the remaining cells get NaN.
    """
    mirror = op.grid.mirror_index(lam)
    AU = np.asarray(U, dtype=float) @ np.asarray(op.A).T
    out = np.full_like(AU, np.nan)
    ok = mirror >= 0
    out[:, ok] = AU[:, mirror[ok]] - AU[:, ok]
    return out
