"""Chains of overlapping parabolic cylinders joining two points of a set."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from ..errors import NetFailure, OutOfRange


@dataclass(frozen=True)
class CylinderChain:
    theta: float
    net: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    m: int
    n: int
    overlaps: np.ndarray = field(repr=False)

    @property
    def mu(self):
        return float(self.overlaps.min()) if len(self.overlaps) else math.inf

    def check(self, tol=1e-12):
        """Return the list of violated invariants (empty when valid)."""
        bad = []
        gaps = np.diff(self.times)
        if np.any(gaps < 7 * self.theta - tol) or np.any(gaps > 7.5 * self.theta + tol):
            bad.append("time steps outside [7 theta, 7.5 theta]")
        if not max(14, self.n) <= self.m <= max(51, 3 * (self.n + 3)):
            bad.append("chain length outside [max(14, n), max(51, 3(n+3))]")
        if len(self.overlaps) and self.overlaps.min() <= 0:
            bad.append("consecutive balls do not overlap")
        return bad


def ball_overlap(d, r, N):
    """Measure of ``B_r(a) ∩ B_r(b)`` with ``|a-b| = d``."""
    d = np.asarray(d, dtype=float)
    if N == 1:
        return np.maximum(2 * r - d, 0.0)
    dd = np.minimum(d, 2 * r)
    lens = 2 * r * r * np.arccos(dd / (2 * r)) - 0.5 * dd * np.sqrt(np.maximum(4 * r * r - dd * dd, 0.0))
    return np.where(d < 2 * r, lens, 0.0)


def point_net(D, r0, seeds=()):
    """Greedy net of D: every point of D lies within ``r0/2`` of a net point."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    net = [np.asarray(p, dtype=float) for p in seeds]
    dist = np.full(len(D), np.inf)
    for p in net:
        dist = np.minimum(dist, np.linalg.norm(D - p, axis=1))
    while dist.max() > 0.5 * r0:
        k = int(np.argmax(dist))
        net.append(D[k].copy())
        dist = np.minimum(dist, np.linalg.norm(D - D[k], axis=1))
    return np.array(net)


def _path(net, link, a, b):
    d = np.linalg.norm(net[:, None, :] - net[None, :, :], axis=-1)
    adj = d <= link * (1 + 1e-9)  # ties at exactly r0 + h are links
    prev = {a: None}
    queue = deque([a])
    while queue:
        i = queue.popleft()
        if i == b:
            break
        for j in np.nonzero(adj[i])[0]:
            j = int(j)
            if j not in prev:
                prev[j] = i
                queue.append(j)
    if b not in prev:
        return None
    out = [b]
    while prev[out[-1]] is not None:
        out.append(prev[out[-1]])
    return out[::-1]


def build_chain(D, r0, tau, R, x_start, x_end, t_start, t_end, h=0.0):
    """Cylinder chain from ``(t_start, x_start)`` towards ``(t_end, x_end)``.

    ``D`` is an array of cell centres (spacing ``h``); the net ``S_D``
    covers D by balls of radius ``r0/2`` and links points at distance
    ``<= r0 + h``.  Times follow ``s_j = t_start + j (7 theta + sigma/m)``
    ending at ``t_end - 8 theta``.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    N = D.shape[1]
    if not (r0 > 0 and tau > 0):
        raise OutOfRange("r0 and tau must be positive")
    if h >= r0:
        raise NetFailure(f"cell size {h} is not below r0={r0}; no overlapping net")
    span = t_end - t_start
    if not (tau - 1e-12 <= span <= 3 * tau + 1e-12):
        raise OutOfRange("t_end - t_start must lie in [tau, 3 tau]")
    diam = float(pdist(D).max()) if len(D) > 1 else 0.0
    if diam > R + 1e-12:
        raise OutOfRange(f"diameter {diam} exceeds the bound R={R}")
    net = point_net(D, r0, seeds=(x_start, x_end))
    n = len(net) - 1
    path = _path(net, r0 + h, 0, 1)
    if path is None:
        raise NetFailure("the point net is disconnected at this r0")
    theta = tau / 7 * min(1 / 17, 1 / (n + 3))
    m = int(math.floor((span - 8 * theta) / (7 * theta)))
    sigma = span - 8 * theta - 7 * theta * m
    times = t_start + np.arange(m + 1) * (7 * theta + sigma / m)
    if len(path) > m + 1:
        raise NetFailure("chain path longer than the available cylinders")
    idx = path + [path[-1]] * (m + 1 - len(path))
    points = net[idx]
    d = np.linalg.norm(np.diff(points, axis=0), axis=1)
    overlaps = ball_overlap(d, r0, N)
    return CylinderChain(theta, net, points, times, m, n, overlaps)
