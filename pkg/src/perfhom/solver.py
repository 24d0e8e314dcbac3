"""Boundary-value problems: the perforated obstacle problem, its semilinear
homogenized limit, and the plain obstacle limit of the dilute regime.

The perforated problem keeps hole nodes as unknowns carrying the obstacle
(the solution is a supersolution everywhere, holes are not excised).  The
homogenized equation's piecewise-linear reaction is handled by active-set
iteration, which terminates once the contact set stabilizes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import grids, relax, stencil
from .cell import EffectiveTensor
from .fields import ConstantField
from .grids import HOLE, OUTER_BOUNDARY
from .relax import RelaxProblem, SolverError


@dataclass
class EpsProblemSpec:
    """Data of the perforated obstacle problem at one eps."""

    field: object
    phi: object
    dom: object  # PerforatedDomain

    def obstacle_eps(self):
        """phi on hole nodes, 0 elsewhere (the truncated obstacle)."""
        grid = self.dom.grid
        psi = np.zeros(grid.shape)
        hole = self.dom.classes == HOLE
        psi[hole] = self.phi.eval_axes(grid.axes)[hole]
        return psi

    def operator(self):
        return stencil.assemble(self.field, self.dom.grid,
                                eps_scale=self.dom.scale.eps)


def solve_eps_problem(spec, tol_rel=1e-8, max_sweeps=relax.MAX_SWEEPS_DEFAULT,
                      return_info=False):
    """Least discrete supersolution above the truncated obstacle.

    Linear complementarity system min(-L u, u - phi_eps) = 0 on all
    interior nodes (holes included), u = 0 on the outer boundary.
    """
    opr = spec.operator()
    if not opr.dominance_flag:
        warnings.warn("stencil is not diagonally dominant; the comparison "
                      "principle is not guaranteed", RuntimeWarning)
    psi = spec.obstacle_eps()
    fixed = spec.dom.classes == OUTER_BOUNDARY
    u, info = relax.solve_lcp(opr, psi, f=0.0, g=0.0, fixed=fixed,
                              tol_rel=tol_rel, max_sweeps=max_sweeps)
    return (u, info) if return_info else u


@dataclass
class HomogenizedSpec:
    """Data of the limit equation abar : D^2 u + beta0 (phi - u)_+ = 0."""

    abar: object  # EffectiveTensor or constant matrix
    beta0: float
    phi: object
    grid: object  # BoxGrid
    forcing: object = None  # optional extra right side F (array or scalar)

    def __post_init__(self):
        if self.beta0 < 0:
            raise ValueError("beta0 must be nonnegative")

    def tensor(self):
        if isinstance(self.abar, EffectiveTensor):
            return self.abar.abar
        return np.asarray(self.abar, dtype=float)

    def operator(self):
        return stencil.assemble(ConstantField(self.tensor()), self.grid)


def solve_homogenized(spec, tol_rel=1e-9, max_active_iters=60,
                      max_sweeps=relax.MAX_SWEEPS_DEFAULT,
                      return_info=False):
    """Active-set iteration for the semilinear homogenized equation.

    On the current active set A = {phi > u} the reaction is linear, so
    each pass solves L u - beta0 * 1_A * u = -beta0 * 1_A * phi - F and
    recomputes A; ties phi = u count as inactive.  The set stabilizes in
    finitely many passes on a fixed grid (monotone operator splitting),
    after which the full nodewise residual is checked.
    """
    opr = spec.operator()
    grid = spec.grid
    beta0 = float(spec.beta0)
    phi = spec.phi.eval_axes(grid.axes) if hasattr(spec.phi, "eval_axes") \
        else np.broadcast_to(spec.phi, grid.shape).astype(float)
    F = np.zeros(grid.shape) if spec.forcing is None \
        else np.broadcast_to(spec.forcing, grid.shape).astype(float)
    fixed = grid.boundary_mask()
    unknown = ~fixed
    scale = max(float(np.max(np.abs(F))) + beta0 * float(np.max(np.abs(phi))),
                1.0)
    tol_abs = tol_rel * scale

    u = np.zeros(grid.shape)
    active = unknown & (phi > u)
    log = []
    for it in range(max_active_iters):
        shift = np.where(active, beta0, 0.0)
        prob = RelaxProblem(opr.w, opr.w, opr.diag + shift, opr.idxp,
                            opr.idxn, unknown, cross=opr.cross)
        rhs = -F - beta0 * np.where(active, phi, 0.0)
        u, info = prob.solve(rhs, u, tol_abs=tol_abs, max_sweeps=max_sweeps)
        new_active = unknown & (phi > u)
        log.append({"iter": it, "active": int(new_active.sum()),
                    "residual": info["residual"]})
        if (new_active == active).all():
            break
        active = new_active
    else:
        raise SolverError("active set did not stabilize within "
                          f"{max_active_iters} iterations")
    res = opr.apply(u) + beta0 * np.maximum(phi - u, 0.0) + F
    res_max = float(np.max(np.abs(res[unknown])))
    if res_max > 10.0 * tol_abs:
        raise SolverError(f"semilinear residual {res_max:.3e} above "
                          f"tolerance", residual=res_max)
    info = {"active_iters": len(log), "log": log, "residual": res_max,
            "active_count": int(active.sum())}
    return (u, info) if return_info else u


def solve_limit_obstacle(abar, phi, grid, tol_rel=1e-8,
                         max_sweeps=relax.MAX_SWEEPS_DEFAULT,
                         return_info=False):
    """Constant-coefficient obstacle problem with phi on all interior nodes."""
    A = abar.abar if isinstance(abar, EffectiveTensor) \
        else np.asarray(abar, dtype=float)
    opr = stencil.assemble(ConstantField(A), grid)
    psi = phi.eval_axes(grid.axes) if hasattr(phi, "eval_axes") \
        else np.broadcast_to(phi, grid.shape).astype(float)
    u, info = relax.solve_lcp(opr, psi, f=0.0, g=0.0,
                              fixed=grid.boundary_mask(), tol_rel=tol_rel,
                              max_sweeps=max_sweeps)
    return (u, info) if return_info else u
