"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

The signatures and summation semantics match the compiled module; results
agree to round-off (the compiled loops sum in index order).
"""
import numpy as np

_BLOCK = 256


def kernel_matrix(points, weight, c, expo):
    """Dense ``K[i, j] = c * weight / |x_i - x_j|^expo`` with a zero diagonal."""
    p = np.ascontiguousarray(points, dtype=float)
    n = len(p)
    K = np.empty((n, n))
    for a in range(0, n, _BLOCK):
        b = min(n, a + _BLOCK)
        d2 = ((p[a:b, None, :] - p[None, :, :]) ** 2).sum(-1)
        idx = np.arange(a, b)
        d2[idx - a, idx] = 1.0
        blk = c * weight * d2 ** (-0.5 * expo)
        blk[idx - a, idx] = 0.0
        K[a:b] = blk
    return K


def _pair_kernel(pa, pb, c, expo, mode, lam, beta):
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1)
    if mode == 0:
        with np.errstate(divide="ignore"):
            return c * d2 ** (-0.5 * expo)
    xa = pa[:, 0][:, None]
    xb = pb[:, 0][None, :]
    if mode == 2:
        shift = np.minimum(beta - (xa - lam), beta - (xb - lam))
        shift = np.where(shift >= 0.0, shift, 0.0)
        xa = xa + shift
        xb = xb + shift
    inside = (xa > lam) & (xb > lam)
    refl = 2.0 * lam - xb
    dq2 = d2 - (pa[:, None, 0] - pb[None, :, 0]) ** 2 + (xa - refl) ** 2
    with np.errstate(divide="ignore"):
        J = c * (d2 ** (-0.5 * expo) - dq2 ** (-0.5 * expo))
    return np.where(inside, J, 0.0)


def pair_form(u, v, points, weight, c, expo, mode=0, lam=0.0, beta=0.0):
    """``1/2 sum_{i != j} (u_i-u_j)(v_i-v_j) k(x_i, x_j) w^2``.

    mode 0: ``k = c|x-y|^{-expo}``; mode 1: the reflected difference kernel
    for the half-space ``{x_1 > lam}``; mode 2: the same kernel evaluated at
    points shifted by ``min(beta - x_1, beta - y_1)^+`` (coordinates relative
    to ``lam``).
    """
    p = np.ascontiguousarray(points, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(p)
    total = 0.0
    for a in range(0, n, _BLOCK):
        b = min(n, a + _BLOCK)
        k = _pair_kernel(p[a:b], p, c, expo, mode, lam, beta)
        idx = np.arange(a, b)
        k[idx - a, idx] = 0.0
        du = u[a:b, None] - u[None, :]
        dv = v[a:b, None] - v[None, :]
        total += float((du * dv * k).sum())
    return 0.5 * total * weight * weight


def holder_max(values, xs, ts, alpha, tpow):
    """Max of ``|u_a - u_b| / (|x_a - x_b| + |t_a - t_b|^tpow)^alpha``."""
    vals = np.asarray(values, dtype=float)
    x = np.ascontiguousarray(xs, dtype=float)
    t = np.asarray(ts, dtype=float)
    m = len(vals)
    best = 0.0
    for a in range(0, m, _BLOCK):
        b = min(m, a + _BLOCK)
        dx = np.sqrt(((x[a:b, None, :] - x[None, :, :]) ** 2).sum(-1))
        den = (dx + np.abs(t[a:b, None] - t[None, :]) ** tpow) ** alpha
        num = np.abs(vals[a:b, None] - vals[None, :])
        ok = den > 0
        if ok.any():
            best = max(best, float((num[ok] / den[ok]).max()))
    return best
