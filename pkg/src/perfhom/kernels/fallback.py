"""Pure-numpy relaxation sweeps (reference backend).

Vectorized red-black Gauss-Seidel on structured grids.  A stencil is given
by per-node neighbor weights ``w_lo[d]``/``w_hi[d]`` (toward -e_d / +e_d), a
positive diagonal ``diag`` and optional cross weights for mixed derivatives:

    L u = sum_d (w_lo[d] u(x-e_d) + w_hi[d] u(x+e_d)) + cross(u) - diag * u

Neighbor topology (periodic wrap or clamped box) is encoded in the 1-D index
arrays ``idxp``/``idxn``.  With axis neighbors only, the masked color update
reproduces true Gauss-Seidel ordering; cross weights couple same-colored
nodes and are treated with previous-iterate values.
"""

import numpy as np

NAME = "fallback"
COMPILED = False


def _take(u, idx, axis):
    return u.take(idx, axis=axis)


def neighbor_sum(u, w_lo, w_hi, idxp, idxn, cross=None):
    n = u.ndim
    S = np.zeros_like(u)
    for d in range(n):
        S += w_lo[d] * _take(u, idxp[d], d)
        S += w_hi[d] * _take(u, idxn[d], d)
    if cross:
        for (i, j), w in cross.items():
            upp = _take(_take(u, idxn[i], i), idxn[j], j)
            umm = _take(_take(u, idxp[i], i), idxp[j], j)
            upm = _take(_take(u, idxn[i], i), idxp[j], j)
            ump = _take(_take(u, idxp[i], i), idxn[j], j)
            S += w * (upp + umm - upm - ump)
    return S


def apply_stencil(u, w_lo, w_hi, diag, idxp, idxn, cross=None):
    return neighbor_sum(u, w_lo, w_hi, idxp, idxn, cross) - diag * u


def sweep_color(u, rhs, w_lo, w_hi, diag, mask, idxp, idxn, omega,
                psi=None, cross=None):
    """Relax the masked nodes in place; mask already encodes the color."""
    S = neighbor_sum(u, w_lo, w_hi, idxp, idxn, cross)
    unew = (S - rhs) / diag
    old = u[mask]
    val = old + omega * (unew[mask] - old)
    if psi is not None:
        val = np.maximum(psi[mask], val)
    u[mask] = val


def residual_max(u, rhs, w_lo, w_hi, diag, unknown, idxp, idxn, cross=None):
    r = apply_stencil(u, w_lo, w_hi, diag, idxp, idxn, cross) - rhs
    return float(np.max(np.abs(r[unknown]))) if unknown.any() else 0.0


def lcp_residual_max(u, rhs, w_lo, w_hi, diag, unknown, idxp, idxn, psi,
                     cross=None):
    Lu = apply_stencil(u, w_lo, w_hi, diag, idxp, idxn, cross) - rhs
    r = np.minimum(-Lu, u - psi)
    return float(np.max(np.abs(r[unknown]))) if unknown.any() else 0.0
