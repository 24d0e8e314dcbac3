"""Green's function probes: mollified sources, pointwise bounds, L^1 data.

The approximate Green's function is the solution of the Dirichlet problem
on the unit ball around the source with the normalized indicator of a small
ball as data.  The probes check the |x-x0|^(2-n) envelope, the almost
homogeneous behavior near the source, and the boundedness of the gradient
in L^q for sub-critical q with L^1-normalized data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids, relax, stencil


class _ShiftedField:
    """View of a coefficient field with translated coordinates."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float),
                                     (base.n,))
        self.n = base.n
        self.lam = base.lam
        self.Lam = base.Lam

    def diag_axes(self, axes):
        return self.base.diag_axes(
            [a + s for a, s in zip(axes, self.shift)])

    def offdiag_axes(self, axes):
        return self.base.offdiag_axes(
            [a + s for a, s in zip(axes, self.shift)])

    def to_spec(self):
        return {"kind": "shifted", "shift": self.shift.tolist(),
                "base": self.base.to_spec()}


@dataclass
class GreenProbe:
    """Approximate Green's function with source diagnostics."""

    x0: np.ndarray
    sigma: float
    G: np.ndarray
    grid: object
    dist: np.ndarray
    source_mass: float
    bound_ratio: float
    fixed: np.ndarray


def _ball_setup(fld, x0, N):
    """Grid on the unit ball around x0 (cube [-1,1]^n, exterior fixed)."""
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (fld.n,))
    grid = grids.BoxGrid(fld.n, N, lo=-1.0, hi=1.0)
    opr = stencil.assemble(_ShiftedField(fld, x0), grid)
    d2 = np.zeros(grid.shape)
    for d in range(fld.n):
        sh = [1] * fld.n
        sh[d] = grid.shape[d]
        d2 = d2 + (grid.axes[d] ** 2).reshape(sh)
    dist = np.sqrt(d2)
    fixed = dist >= 1.0
    return x0, grid, opr, dist, fixed


def approx_green(fld, x0, sigma, N):
    """Solve a_ij D_ij G = -f_sigma on B_1(x0), G = 0 outside the ball.

    f_sigma is the nodal indicator of B_sigma(x0) scaled so its discrete
    integral is exactly 1.  bound_ratio is the sup of G * |x-x0|^(n-2) over
    the shell 3*sigma <= |x-x0| <= 0.4.
    """
    x0, grid, opr, dist, fixed = _ball_setup(fld, x0, N)
    if sigma < 2.0 * grid.h:
        raise ValueError(f"sigma={sigma:g} under-resolved at h={grid.h:g}")
    if sigma >= 1.0 / 3.0:
        raise ValueError("sigma too large for the probe shells")
    src = dist <= sigma
    hn = grid.h ** fld.n
    f = np.zeros(grid.shape)
    f[src] = 1.0 / (src.sum() * hn)
    G, _ = relax.solve_dirichlet(opr, f=f, g=0.0, fixed=fixed)
    shell = (dist >= 3.0 * sigma) & (dist <= 0.4) & ~fixed
    ratio = float((G[shell] * dist[shell] ** (fld.n - 2)).max()) \
        if shell.any() else np.nan
    return GreenProbe(x0=x0, sigma=sigma, G=G, grid=grid, dist=dist,
                      source_mass=float(f.sum() * hn), bound_ratio=ratio,
                      fixed=fixed)


def almost_homogeneity_probe(fld, x0, radii, sigma=None, N=96):
    """Per-radius band of G * r^(n-2) on shells of width 2h around r.

    Returns a list of rows {radius, min, max, band_ratio}; for constant
    isotropic coefficients the band tightens toward 1 as the radius
    shrinks (with sigma fixed small).
    """
    radii = sorted(float(r) for r in radii)
    if sigma is None:
        sigma = max(radii[0] / 3.5, 2.5 / N)
    probe = approx_green(fld, x0, sigma, N)
    rows = []
    for r in radii:
        if not 3.0 * sigma <= r <= 0.4:
            raise ValueError(f"radius {r:g} outside the probe range "
                             f"({3 * sigma:g}, 0.4)")
        shell = (np.abs(probe.dist - r) <= probe.grid.h) & ~probe.fixed
        vals = probe.G[shell] * probe.dist[shell] ** (fld.n - 2)
        lo, hi = float(vals.min()), float(vals.max())
        rows.append({"radius": r, "min": lo, "max": hi,
                     "band_ratio": hi / lo if lo > 0 else np.inf})
    return {"sigma": sigma, "rows": rows, "probe": probe}


def gradient_lq_norm(u, grid, q):
    """Discrete |grad u|_{L^q} by forward differences, midpoint quadrature.

    Cells touching the outer boundary are excluded from the sum.
    """
    n = grid.n
    grads = []
    for d in range(n):
        diff = (np.roll(u, -1, axis=d) - u) / grid.h
        grads.append(diff)
    mag = np.sqrt(sum(g * g for g in grads))
    core = tuple(slice(1, -2) for _ in range(n))
    hn = grid.h ** n
    return float((np.abs(mag[core]) ** q).sum() * hn) ** (1.0 / q)


def l1_gradient_test(fld, q, shrink_list, N=96, center=0.5):
    """W^{1,q} response to shrinking unit-mass sources on the unit box.

    Solves a_ij D_ij u = -f_r with f_r the normalized indicator of
    B_r(center), Dirichlet zero on the box.  Sub-critical q < n/(n-1)
    should give a bounded (convergent) norm sequence as r shrinks; the
    super-critical branch is reported with its growth rate for contrast.
    """
    q = float(q)
    if q < 1.0:
        raise ValueError("q must be >= 1")
    grid = grids.BoxGrid(fld.n, N)
    opr = stencil.assemble(fld, grid)
    c = np.broadcast_to(np.asarray(center, dtype=float), (fld.n,))
    d2 = np.zeros(grid.shape)
    for d in range(fld.n):
        sh = [1] * fld.n
        sh[d] = grid.shape[d]
        d2 = d2 + ((grid.axes[d] - c[d]) ** 2).reshape(sh)
    dist = np.sqrt(d2)
    hn = grid.h ** fld.n
    rows = []
    prev = None
    for r in sorted(shrink_list, reverse=True):
        if r < 1.5 * grid.h:
            raise ValueError(f"source radius {r:g} under-resolved")
        src = dist <= r
        f = np.zeros(grid.shape)
        f[src] = 1.0 / (src.sum() * hn)
        u, _ = relax.solve_dirichlet(opr, f=f, g=0.0)
        norm = gradient_lq_norm(u, grid, q)
        row = {"r": float(r), "grad_lq": norm,
               "ratio": norm / prev if prev else np.nan}
        rows.append(row)
        prev = norm
    subcritical = q < fld.n / (fld.n - 1.0)
    return {"q": q, "subcritical": subcritical, "rows": rows}
