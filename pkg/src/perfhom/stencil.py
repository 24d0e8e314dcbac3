"""Finite-difference assembly of the non-divergence operator a_ij(x/eps) D_ij.

Pure second derivatives use the 3-point central difference, mixed ones the
4-point cross difference; both are exact on quadratics.  The stencil is kept
as per-node weight arrays (see ``perfhom.kernels``), which also encode the
transpose action needed for the invariant measure.
"""

from __future__ import annotations

import numpy as np

from .kernels import fallback


class StencilOperator:
    """Discrete a_ij D_ij on a structured grid.

    w[d] is the weight toward both +/- e_d neighbors (a_dd / h^2), cross
    holds a_ij / (2 h^2) for i < j, diag = 2 * sum_d w[d] > 0, so that
    apply(u) = neighbor_sum(u) - diag * u.
    """

    def __init__(self, grid, eps, w, cross, diag, dominance_flag):
        self.grid = grid
        self.eps = float(eps)
        self.w = w
        self.cross = cross
        self.diag = diag
        self.dominance_flag = dominance_flag
        self.n = grid.n
        self.h = grid.h
        self.idxp, self.idxn = neighbor_indices(grid)
        self._invariant_measure = None  # cache, filled by relax module

    def apply(self, u):
        """L u on the full grid; meaningful on interior/unknown nodes."""
        return fallback.apply_stencil(np.asarray(u, dtype=float), self.w,
                                      self.w, self.diag, self.idxp,
                                      self.idxn, self.cross)

    def transpose_apply(self, m):
        """(L^T m): weights gathered from the contributing neighbor."""
        if not self.grid.periodic:
            raise ValueError("transpose action only defined on periodic grids")
        m = np.asarray(m, dtype=float)
        out = -self.diag * m
        for d in range(self.n):
            wm = self.w[d] * m
            out += wm.take(self.idxp[d], axis=d)
            out += wm.take(self.idxn[d], axis=d)
        for (i, j), wgt in self.cross.items():
            wm = wgt * m
            out += wm.take(self.idxp[i], axis=i).take(self.idxp[j], axis=j)
            out += wm.take(self.idxn[i], axis=i).take(self.idxn[j], axis=j)
            out -= wm.take(self.idxp[i], axis=i).take(self.idxn[j], axis=j)
            out -= wm.take(self.idxn[i], axis=i).take(self.idxp[j], axis=j)
        return out

    def coefficient_rhs(self, M):
        """a_ij(x/eps) M_ij on the grid (data of the corrector problem)."""
        M = np.asarray(M, dtype=float)
        h2 = self.h * self.h
        out = np.zeros(self.grid.shape)
        for d in range(self.n):
            out += self.w[d] * (h2 * M[d, d])
        for (i, j), wgt in self.cross.items():
            out += wgt * (2.0 * h2 * 2.0 * M[i, j])
        return out


def neighbor_indices(grid):
    """Per-axis previous/next index maps (wrap if periodic, clamp if not).

    Clamped entries are only reached from fixed boundary nodes, which are
    never updated, so the clamp value is immaterial.
    """
    idxp, idxn = [], []
    for d in range(grid.n):
        size = grid.shape[d]
        prev = np.arange(size, dtype=np.intp) - 1
        nxt = np.arange(size, dtype=np.intp) + 1
        if grid.periodic:
            prev %= size
            nxt %= size
        else:
            prev[0] = 0
            nxt[-1] = size - 1
        idxp.append(prev)
        idxn.append(nxt)
    return idxp, idxn


def assemble(field, grid, eps_scale=1.0):
    """Build the stencil of a_ij(x/eps_scale) D_ij on the grid.

    The dominance flag records whether a_ii - sum_{j != i} |a_ij| >= 0 held
    at every node (the scheme is monotone exactly then); a failure is a
    warning carried by the flag, not an error.
    """
    if eps_scale <= 0:
        raise ValueError("eps_scale must be positive")
    axes_y = [np.asarray(ax, dtype=float) / eps_scale for ax in grid.axes]
    diag_entries = field.diag_axes(axes_y)
    cross_entries = field.offdiag_axes(axes_y)
    h2 = grid.h * grid.h

    w = []
    scaled = {}
    for d in range(grid.n):
        key = id(diag_entries[d])
        if key not in scaled:  # scalar fields share one array across axes
            scaled[key] = diag_entries[d] / h2
        w.append(scaled[key])
    cross = {ij: arr / (2.0 * h2) for ij, arr in cross_entries.items()}

    diag = np.zeros(grid.shape)
    for d in range(grid.n):
        diag = diag + 2.0 * w[d]

    if cross_entries:
        dominance = True
        for d in range(grid.n):
            slack = diag_entries[d].copy()
            for (i, j), arr in cross_entries.items():
                if d in (i, j):
                    slack = slack - np.abs(arr)
            if slack.min() < 0:
                dominance = False
                break
    else:
        dominance = True
    return StencilOperator(grid, eps_scale, w, cross, diag, dominance)
