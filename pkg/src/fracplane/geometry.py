"""Domains, cell grids, reflections and caps.

Everything here is immutable after construction.  A *grid function* is a
1-D array with one entry per Omega-cell (in ``Grid.points`` order); the
exterior of Omega is implicitly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, ndimage

from .errors import EmptyCap, EmptyRegion, OutOfRange

KINDS = ("interval", "rectangle", "disk", "cells")


def reflect(x, lam):
    """Reflection ``Q_lam`` at the hyperplane ``{x_1 = lam}``.

    Accepts a single point or an ``(m, d)`` array of points.
    """
    x = np.array(x, dtype=float)
    out = x.copy()
    out[..., 0] = 2.0 * lam - x[..., 0]
    return out


@dataclass(frozen=True)
class Domain:
    """A bounded region in one or two dimensions.

    ``bounds`` is the bounding box, one ``(lo, hi)`` pair per axis.  For
    ``kind="cells"`` the region is the union of the closed cells flagged in
    ``cell_mask`` on the lattice of spacing ``cell_h`` anchored at the lower
    bounding-box corner.
    """

    kind: str
    dim: int
    bounds: tuple
    radius: float = 0.0
    cell_mask: np.ndarray | None = field(default=None, compare=False)
    cell_h: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise OutOfRange(f"unknown domain kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise OutOfRange("only dimensions 1 and 2 are supported")
        for lo, hi in self.bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise OutOfRange(f"invalid extent ({lo}, {hi})")

    # -- constructors -----------------------------------------------------
    @classmethod
    def interval(cls, lo=-1.0, hi=1.0):
        return cls("interval", 1, ((float(lo), float(hi)),))

    @classmethod
    def rectangle(cls, x1=(-1.0, 1.0), x2=(-1.0, 1.0)):
        return cls("rectangle", 2, (tuple(map(float, x1)), tuple(map(float, x2))))

    @classmethod
    def disk(cls, radius=1.0):
        r = float(radius)
        if r <= 0:
            raise OutOfRange("disk radius must be positive")
        return cls("disk", 2, ((-r, r), (-r, r)), radius=r)

    @classmethod
    def from_cells(cls, mask, h, origin):
        """Union of lattice cells; ``origin`` is the lower corner of cell 0."""
        mask = np.asarray(mask, dtype=bool)
        origin = np.atleast_1d(np.asarray(origin, dtype=float))
        bounds = tuple((float(o), float(o + n * h)) for o, n in zip(origin, mask.shape))
        mask = mask.copy()
        mask.setflags(write=False)
        return cls("cells", mask.ndim, bounds, cell_mask=mask, cell_h=float(h))

    # -- membership and metrics -------------------------------------------
    @property
    def max_x1(self):
        if self.kind == "cells":
            idx = np.nonzero(self.cell_mask.any(axis=tuple(range(1, self.dim))))[0]
            return self.bounds[0][0] + (idx.max() + 1) * self.cell_h
        return self.bounds[0][1]

    def contains(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[-1] != self.dim:
            p = p.reshape(-1, self.dim)
        if self.kind == "disk":
            return np.einsum("ij,ij->i", p, p) < self.radius**2
        if self.kind in ("interval", "rectangle"):
            ok = np.ones(len(p), dtype=bool)
            for k, (lo, hi) in enumerate(self.bounds):
                ok &= (p[:, k] > lo) & (p[:, k] < hi)
            return ok
        idx = self._cell_index(p)
        inside = np.all((idx >= 0) & (idx < np.array(self.cell_mask.shape)), axis=1)
        out = np.zeros(len(p), dtype=bool)
        out[inside] = self.cell_mask[tuple(idx[inside].T)]
        return out

    def _cell_index(self, p):
        lo = np.array([b[0] for b in self.bounds])
        return np.floor((p - lo) / self.cell_h).astype(int)

    def is_x1_symmetric(self):
        """Structural (D1) test: symmetric about ``x_1 = 0`` and convex in x_1."""
        if self.kind == "disk":
            return True
        lo, hi = self.bounds[0]
        if self.kind in ("interval", "rectangle"):
            return math.isclose(lo, -hi)
        m = self.cell_mask
        if not math.isclose(lo, -hi) or not np.array_equal(m, m[::-1]):
            return False
        lines = m.reshape(m.shape[0], -1).T
        for line in lines:
            on = np.nonzero(line)[0]
            if len(on) and (on[-1] - on[0] + 1) != len(on):
                return False
        return True

    def distance_to_boundary(self, points):
        """Euclidean distance to ``\\partial\\Omega`` for points inside Omega."""
        p = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, self.dim)
        if self.kind == "disk":
            return np.abs(self.radius - np.sqrt(np.einsum("ij,ij->i", p, p)))
        if self.kind in ("interval", "rectangle"):
            d = np.full(len(p), np.inf)
            for k, (lo, hi) in enumerate(self.bounds):
                d = np.minimum(d, np.minimum(np.abs(p[:, k] - lo), np.abs(hi - p[:, k])))
            return d
        # cells: distance to the nearest closed complement cell
        comp = self._complement_boxes()
        d = np.full(len(p), np.inf)
        for blo, bhi in comp:
            gap = np.maximum(np.maximum(blo - p, p - bhi), 0.0)
            d = np.minimum(d, np.sqrt((gap**2).sum(axis=1)))
        return d

    def _complement_boxes(self):
        """Boxes covering the complement: lattice holes plus a frame."""
        h = self.cell_h
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        holes = np.argwhere(~self.cell_mask)
        boxes = [(lo + k * h, lo + (k + 1) * h) for k in holes]
        big = 1e6 * (1.0 + np.abs(hi - lo).max())
        for ax in range(self.dim):
            a = np.full(self.dim, -big)
            b = np.full(self.dim, big)
            b[ax] = lo[ax]
            boxes.append((a.copy(), b.copy()))
            a[ax], b[ax] = hi[ax], big
            boxes.append((a, b))
        return boxes

    # -- ray geometry (2-D convex kinds) -----------------------------------
    def ray_exit(self, x, theta):
        """Distance from interior point ``x`` to the boundary along ``theta``."""
        c, s = np.cos(theta), np.sin(theta)
        if self.kind == "disk":
            b = x[0] * c + x[1] * s
            return -b + np.sqrt(b * b + self.radius**2 - x[0] ** 2 - x[1] ** 2)
        if self.kind == "rectangle":
            (a0, b0), (a1, b1) = self.bounds
            with np.errstate(divide="ignore", invalid="ignore"):
                tx = np.where(c > 0, (b0 - x[0]) / c, np.where(c < 0, (a0 - x[0]) / c, np.inf))
                ty = np.where(s > 0, (b1 - x[1]) / s, np.where(s < 0, (a1 - x[1]) / s, np.inf))
            return np.minimum(tx, ty)
        raise OutOfRange(f"ray_exit undefined for kind {self.kind!r}")

    def _ray_breakpoints(self, x):
        if self.kind == "disk":
            th = math.atan2(x[1], x[0]) % (2 * math.pi)
            return sorted({th, (th + math.pi) % (2 * math.pi)})
        (a0, b0), (a1, b1) = self.bounds
        pts = [0.5 * math.pi, math.pi, 1.5 * math.pi]
        for cx in (a0, b0):
            for cy in (a1, b1):
                pts.append(math.atan2(cy - x[1], cx - x[0]) % (2 * math.pi))
        return sorted(p for p in set(pts) if 0 < p < 2 * math.pi)

    def exterior_integral(self, points, s, epsrel=1e-10):
        """``int_{R^N \\ Omega} |x-y|^{-N-2s} dy`` for each interior point.

        Exact in 1-D; in 2-D an adaptive angular quadrature of the radial
        antiderivative ``rho(theta)^{-2s}/(2s)`` (convex kinds) or a frame
        plus hole decomposition (cell unions).
        """
        p = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, self.dim)
        if self.dim == 1:
            x = p[:, 0]
            if self.kind == "interval":
                lo, hi = self.bounds[0]
                return ((x - lo) ** (-2 * s) + (hi - x) ** (-2 * s)) / (2 * s)
            return _exterior_cells_1d(self, x, s)
        if self.kind == "cells":
            return _exterior_cells_2d(self, p, s)
        out = np.empty(len(p))
        for i, x in enumerate(p):
            f = lambda th, x=x: self.ray_exit(x, th) ** (-2 * s)
            val, _ = integrate.quad(f, 0.0, 2 * math.pi, points=self._ray_breakpoints(x),
                                    epsrel=epsrel, epsabs=0.0, limit=400)
            out[i] = val / (2 * s)
        return out


def _interval_integral(x, a, b, s):
    """``int_a^b |x-y|^{-1-2s} dy`` for x outside [a, b] (b may be inf)."""
    da = np.abs(x - a)
    db = np.abs(x - b) if math.isfinite(b) else np.inf
    near, far = np.minimum(da, db), np.maximum(da, db)
    with np.errstate(divide="ignore"):
        return (near ** (-2 * s) - np.where(np.isinf(far), 0.0, far ** (-2 * s))) / (2 * s)


def _exterior_cells_1d(dom, x, s):
    h = dom.cell_h
    lo, hi = dom.bounds[0]
    total = ((x - lo) ** (-2 * s) + (hi - x) ** (-2 * s)) / (2 * s)
    for k in np.nonzero(~dom.cell_mask)[0]:
        total = total + _interval_integral(x, lo + k * h, lo + (k + 1) * h, s)
    return total


_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _exterior_cells_2d(dom, p, s):
    lo = np.array([b[0] for b in dom.bounds])
    frame = Domain.rectangle(dom.bounds[0], dom.bounds[1])
    total = frame.exterior_integral(p, s)
    h = dom.cell_h
    for k in np.argwhere(~dom.cell_mask):
        a = lo + k * h
        for i, x in enumerate(p):
            total[i] += _box_integral(x, a, a + h, s)
    return total


def _box_integral(x, a, b, s, depth=0):
    """Tensor Gauss-Legendre integral of |x-y|^{-2-2s} over a box avoiding x."""
    size = (b - a).max()
    gap = np.maximum(np.maximum(a - x, x - b), 0.0)
    dist = math.sqrt((gap**2).sum())
    if dist < 2.0 * size and depth < 6:
        m = 0.5 * (a + b)
        tot = 0.0
        for lo0, hi0 in ((a[0], m[0]), (m[0], b[0])):
            for lo1, hi1 in ((a[1], m[1]), (m[1], b[1])):
                tot += _box_integral(x, np.array([lo0, lo1]), np.array([hi0, hi1]), s, depth + 1)
        return tot
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    y0 = c[0] + r[0] * _GL_X
    y1 = c[1] + r[1] * _GL_X
    d2 = (x[0] - y0)[:, None] ** 2 + (x[1] - y1)[None, :] ** 2
    return float(r[0] * r[1] * (_GL_W[:, None] * _GL_W[None, :] * d2 ** (-1 - s)).sum())


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid on the bounding box of a domain.

    ``centers`` lists every box cell (C order over ``shape``); ``inside``
    flags the Omega-cells and ``omega`` holds their box indices.
    """

    domain: Domain
    h: float
    axes: tuple
    shape: tuple
    centers: np.ndarray
    inside: np.ndarray
    omega: np.ndarray
    points: np.ndarray

    @classmethod
    def build(cls, domain, h):
        h = float(h)
        if not h > 0:
            raise OutOfRange("cell size h must be positive")
        if domain.kind == "cells" and not math.isclose(h, domain.cell_h):
            raise OutOfRange("cell-union domains must use their own lattice spacing")
        axes = []
        for lo, hi in domain.bounds:
            m = max(1, int(math.ceil((hi - lo) / h - 1e-9)))
            mid = 0.5 * (lo + hi)
            axes.append(mid + (np.arange(m) - 0.5 * (m - 1)) * h)
        shape = tuple(len(a) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        centers = np.stack([g.ravel() for g in mesh], axis=1)
        inside = domain.contains(centers)
        omega = np.nonzero(inside)[0]
        for arr in (centers, inside, omega):
            arr.setflags(write=False)
        pts = centers[omega]
        pts.setflags(write=False)
        return cls(domain, h, tuple(axes), shape, centers, inside, omega, pts)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n(self):
        return len(self.omega)

    @property
    def weight(self):
        return self.h**self.dim

    def to_box(self, u):
        """Zero-extend a grid function to the full box array (``shape``)."""
        full = np.zeros(len(self.centers))
        full[self.omega] = u
        return full.reshape(self.shape)

    def box_mask(self, cells=None):
        m = np.zeros(len(self.centers), dtype=bool)
        m[self.omega if cells is None else self.omega[np.asarray(cells)]] = True
        return m.reshape(self.shape)

    def lattice_index(self):
        """Integer lattice coordinates of the Omega-cells, ``(n, dim)``."""
        return np.stack(np.unravel_index(self.omega, self.shape), axis=1)

    def neighbor_pairs(self, cells=None):
        """Face-adjacent pairs ``(i, j)``, ``i < j``, among Omega-cells."""
        pos = np.full(len(self.centers), -1)
        pos[self.omega] = np.arange(self.n)
        box = pos.reshape(self.shape)
        pairs = []
        for ax in range(self.dim):
            a = np.take(box, range(0, self.shape[ax] - 1), axis=ax).ravel()
            b = np.take(box, range(1, self.shape[ax]), axis=ax).ravel()
            ok = (a >= 0) & (b >= 0)
            pairs.append(np.stack([a[ok], b[ok]], axis=1))
        out = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=int)
        if cells is not None:
            keep = np.zeros(self.n, dtype=bool)
            keep[np.asarray(cells)] = True
            out = out[keep[out[:, 0]] & keep[out[:, 1]]]
        return np.sort(out, axis=1)

    def mirror_index(self, lam=0.0):
        """Omega-cell index of the exact mirror of each Omega-cell, or -1."""
        q = reflect(self.points, lam)
        lo = self.axes[0][0]
        k = (q[:, 0] - lo) / self.h
        kr = np.rint(k)
        exact = np.abs(k - kr) < 1e-7
        idx = np.full(self.n, -1)
        lat = self.lattice_index()
        pos = np.full(len(self.centers), -1)
        pos[self.omega] = np.arange(self.n)
        ok = exact & (kr >= 0) & (kr < self.shape[0])
        lat2 = lat.copy()
        lat2[:, 0] = kr.astype(int)
        flat = np.ravel_multi_index(tuple(lat2[ok].T), self.shape)
        idx[ok] = pos[flat]
        return idx


@dataclass(frozen=True)
class CapRegion:
    lam: float
    cells: np.ndarray
    components: list


def _components(grid, cells):
    mask = grid.box_mask(cells)
    structure = ndimage.generate_binary_structure(grid.dim, 1)
    labels, count = ndimage.label(mask, structure=structure)
    flat = labels.ravel()[grid.omega]
    return [np.nonzero(flat == k)[0] for k in range(1, count + 1)]


def cap_region(domain, grid, lam):
    """Omega-cells with ``x_1 > lam`` split into face-connected components."""
    cells = np.nonzero(grid.points[:, 0] > lam)[0]
    if len(cells) == 0:
        raise EmptyCap(f"no Omega-cell center satisfies x_1 > {lam}")
    return CapRegion(float(lam), cells, _components(grid, cells))


@dataclass(frozen=True)
class RegionMetrics:
    measure: float
    diameter: float
    inradius: float
    dist_field: np.ndarray


def region_metrics(region, grid):
    """Measure, diameter, inradius and distance-to-complement of a cell set.

    ``region`` is an index array into the Omega-cells (or a boolean mask).
    The inradius is the minimum over face-connected components of the
    largest inscribed distance, so the smallest component governs.
    """
    cells = np.asarray(region)
    if cells.dtype == bool:
        cells = np.nonzero(cells)[0]
    if len(cells) == 0:
        raise EmptyRegion("region has no cells")
    pts = grid.points[cells]
    measure = len(cells) * grid.weight
    if grid.dim == 1:
        diameter = float(pts[:, 0].max() - pts[:, 0].min())
    else:
        from scipy.spatial import ConvexHull, QhullError
        try:
            hull = pts[ConvexHull(pts).vertices]
        except (QhullError, ValueError):
            hull = pts
        diff = hull[:, None, :] - hull[None, :, :]
        diameter = float(np.sqrt((diff**2).sum(-1)).max())
    mask = np.pad(grid.box_mask(cells), 1, constant_values=False)
    edt = ndimage.distance_transform_edt(mask, sampling=grid.h)
    edt = edt[tuple(slice(1, -1) for _ in range(grid.dim))].ravel()[grid.omega]
    # center-to-center distance minus half a cell = distance to complement cell faces
    dist = edt[cells] - 0.5 * grid.h
    pos = {c: k for k, c in enumerate(cells)}
    inr = min(dist[[pos[c] for c in comp]].max() for comp in _components(grid, cells))
    return RegionMetrics(measure, diameter, float(inr), dist)
