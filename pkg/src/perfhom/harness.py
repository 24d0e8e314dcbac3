"""Sweep orchestration: convergence studies, bound verification, the
variable-coefficient flux experiment, and the non-critical regimes.

Universal constants from the estimates are handled as frozen constants:
calibrated on the coarsest run of a sweep, then asserted at every finer
run.  Rate fits are least-squares in log-log with the residual reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from math import lcm

import numpy as np

from . import cell, fields, grids, relax, solver, stencil
from .grids import FREE, HOLE, ScaleSet


def default_domain_m(eps_list, target=144, cap=192):
    """Smallest multiple of every 1/eps near the target size."""
    base = lcm(*(int(round(1.0 / e)) for e in eps_list))
    M = base * max(1, round(target / base))
    while M > cap:
        M -= base
    if M < base:
        raise ValueError("no admissible grid size under the cap")
    return M


def loglog_slope(x, y):
    """Least-squares slope of log y against log x; (slope, max residual)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = (x > 0) & (y > 0)
    if good.sum() < 2:
        return float("nan"), float("nan")
    cx, cy = np.log(x[good]), np.log(y[good])
    coef = np.polynomial.polynomial.polyfit(cx, cy, 1)
    res = float(np.max(np.abs(coef[0] + coef[1] * cx - cy)))
    return float(coef[1]), res


def verify_discrete_gradient(u_eps, dom):
    """Max of |u(x + eps e) - u(x)| / eps over lattice directions."""
    eps = dom.scale.eps
    grid = dom.grid
    s = int(round(eps * grid.M))
    if abs(s - eps * grid.M) > 1e-9 or s < 1:
        raise ValueError("eps is not a multiple of the grid spacing")
    worst = 0.0
    for d in range(grid.n):
        lo = [slice(None)] * grid.n
        hi = [slice(None)] * grid.n
        lo[d] = slice(None, grid.M + 1 - s)
        hi[d] = slice(s, None)
        diff = np.abs(u_eps[tuple(hi)] - u_eps[tuple(lo)]) / eps
        worst = max(worst, float(diff.max()))
    return worst


def verify_flatness(u_eps, dom):
    """Oscillation of u over each cell cube minus its intermediate ball.

    Only cubes whose tripled concentric cube stays inside the unit box are
    measured.  Returns {"oscillations": per-cube list, "max_osc", "scale"}
    with scale = (a_eps/eps)^((n-2)/2) + eps, the bound's eps-dependence.
    """
    grid = dom.grid
    eps = dom.scale.eps
    n = grid.n
    K = int(round(1.0 / eps))
    free_out = (dom.classes == FREE) & (dom.lattice_dist > dom.scale.b_eps)
    oscs = []
    half = eps / 2.0
    ks = [k for k in range(K + 1) if eps * k - 1.5 * eps >= -1e-12
          and eps * k + 1.5 * eps <= 1.0 + 1e-12]
    for kk in np.stack(np.meshgrid(*[ks] * n, indexing="ij"),
                       axis=-1).reshape(-1, n):
        center = eps * kk
        sls = []
        for d in range(n):
            i0 = int(np.ceil((center[d] - half) / grid.h - 1e-9))
            i1 = int(np.floor((center[d] + half) / grid.h + 1e-9))
            sls.append(slice(max(i0, 0), min(i1, grid.M) + 1))
        block_u = u_eps[tuple(sls)]
        block_m = free_out[tuple(sls)]
        if block_m.any():
            vals = block_u[block_m]
            oscs.append({"k": kk.tolist(),
                         "osc": float(vals.max() - vals.min())})
    max_osc = max((o["osc"] for o in oscs), default=0.0)
    scale = dom.scale.abar_eps ** ((n - 2) / 2.0) + eps
    return {"oscillations": oscs, "max_osc": max_osc, "scale": scale}


@dataclass
class ConvergenceReport:
    """Per-eps error table of the critical sweep with fitted rates."""

    config: dict
    abar: object
    beta0: float
    beta_table: dict
    rows: list
    rate: dict
    sup_decreasing: bool
    fields_kept: dict = dc_field(default_factory=dict)


def run_convergence(fld, phi, eps_list, alpha=1.0, M=None, N_cell=96,
                    beta_eps_list=None, keep_fields=False, quiet=True):
    """Critical sweep: eps-problems against the homogenized reference.

    Computes (abar, beta0) from the cell, solves the homogenized limit
    on each domain grid, then for each eps the perforated obstacle
    problem, its flattened version, the error norms and the per-eps
    diagnostics.  The internal difference |u_eps - ubar_eps| in L^1 carries
    the critical rate eps^(n/(n-2)).

    M may be a single grid size or one per eps: scaling M with eps^-2
    keeps the intermediate-ball resolution b_eps / h comparable across the
    sweep, which a fixed M cannot (the finest eps is then systematically
    under-measured and the rate fit is biased steep).
    """
    if alpha != 1.0:
        raise ValueError("run_convergence is the critical (alpha=1) path")
    if M is None:
        eps_list = sorted(eps_list, reverse=True)
        M_list = [default_domain_m(eps_list)] * len(eps_list)
    elif np.isscalar(M):
        eps_list = sorted(eps_list, reverse=True)
        M_list = [int(M)] * len(eps_list)
    else:
        if len(M) != len(eps_list):
            raise ValueError("M list must match eps_list")
        pairs = sorted(zip(eps_list, M), reverse=True)
        eps_list = [p[0] for p in pairs]
        M_list = [int(p[1]) for p in pairs]
    et = cell.effective_tensor(fld, N_cell)
    beta0, btable = cell.estimate_beta0(
        fld, beta_eps_list or [1 / 2, 1 / 3, 1 / 4], N_cell)
    u_hom_cache = {}

    def hom_on(M):
        if M not in u_hom_cache:
            grid = grids.BoxGrid(fld.n, M)
            u_hom_cache[M] = solver.solve_homogenized(
                solver.HomogenizedSpec(abar=et, beta0=beta0, phi=phi,
                                       grid=grid))
        return u_hom_cache[M]

    rows = []
    kept = {}
    for eps, M in zip(eps_list, M_list):
        u_hom = hom_on(M)
        hn = (1.0 / M) ** fld.n
        dom = grids.perforate(M, ScaleSet(eps, n=fld.n, alpha=1.0),
                              strict=False)
        u_eps = solver.solve_eps_problem(
            solver.EpsProblemSpec(field=fld, phi=phi, dom=dom))
        ubar = grids.underline_transform(u_eps, dom)
        diff = u_eps - ubar
        free = dom.classes == FREE
        err = u_eps - u_hom
        row = {
            "eps": eps, "M": M, "N_cell": N_cell,
            "l1_internal": float(np.abs(diff).sum() * hn),
            "sup_err": float(np.abs((ubar - u_hom)[free]).max()),
            "l1_err": float(np.abs(err).sum() * hn),
            "l2_err": float(np.sqrt((err ** 2).sum() * hn)),
            "grad_ratio": verify_discrete_gradient(u_eps, dom),
        }
        flat = verify_flatness(u_eps, dom)
        row["max_osc"] = flat["max_osc"]
        row["osc_scale"] = flat["scale"]
        rows.append(row)
        if keep_fields:
            kept[f"u_hom_M{M}"] = u_hom
            kept[f"u_eps_{eps:g}"] = u_eps
            kept[f"ubar_eps_{eps:g}"] = ubar
        if not quiet:
            print(f"eps={eps:g}: l1_internal={row['l1_internal']:.4e} "
                  f"sup={row['sup_err']:.4e}")

    slope, res = loglog_slope([r["eps"] for r in rows],
                              [r["l1_internal"] for r in rows])
    sups = [r["sup_err"] for r in rows]
    sup_dec = all(b < a for a, b in zip(sups, sups[1:]))
    config = {"eps_list": eps_list, "alpha": alpha, "M": M_list,
              "N_cell": N_cell, "field": fld.to_spec(),
              "phi": phi.to_spec() if hasattr(phi, "to_spec") else None}
    return ConvergenceReport(config=config, abar=et, beta0=beta0,
                             beta_table=btable, rows=rows,
                             rate={"l1_internal_slope": slope,
                                   "fit_residual": res,
                                   "expected": fld.n / (fld.n - 2.0)},
                             sup_decreasing=sup_dec, fields_kept=kept)


def remark_experiment(delta_list, eps_list, N=64, N_refine=None,
                      capacity_R=12.0, capacity_N=8):
    """Flux decomposition of the cell identity for the bump coefficient.

    For a = (2 + psi) I the identity |Q1 \\ B| beta_eps = I1 - I2 + I3
    holds with I1 the bulk pairing of Laplacian(psi) with the corrector,
    I2 the hole average of Laplacian(psi) scaled by eps^-2, and I3 the
    hole-boundary flux.  I3 tends to gamma0 = (2 + psi(0)) * cap(B_1)
    while I1 keeps a sign for small delta, so beta0 and gamma0 split.
    """
    eps_list = sorted(eps_list, reverse=True)
    if N_refine is None:
        # coarsest grid still resolving the hole at the finest eps
        abar_fine = eps_list[-1] ** 2
        N_refine = max(N // 2, int(np.ceil(2.05 / abar_fine / 2)) * 2)
    if N_refine >= N:
        raise ValueError("refinement grid must be coarser than N")
    cap_I = cell.capacity_potential(np.eye(3), R=capacity_R,
                                    N_exterior=capacity_N)
    out = {"gamma_unit": cap_I.gamma0, "deltas": []}
    for delta in delta_list:
        fld = fields.build_remark_coefficient(delta, N)
        a0 = float(fld.matrix(np.zeros(3))[0, 0])
        gamma0 = a0 * cap_I.gamma0
        rows = [
            _remark_row(fld, delta, eps, N) for eps in eps_list]
        # grid-refinement deltas at the finest eps
        fld_c = fields.build_remark_coefficient(delta, N_refine)
        coarse = _remark_row(fld_c, delta, eps_list[-1], N_refine)
        fine = rows[-1]
        refine = {k: abs(fine[k] - coarse[k]) for k in ("I1", "I2", "I3")}
        t = np.array([r["eps"] for r in rows]) ** 2
        b = np.array([r["beta_eps"] for r in rows])
        if len(rows) >= 3:
            beta0 = float(np.polynomial.polynomial.polyfit(t ** 2, b, 1)[0])
        else:
            beta0 = float(b[-1])
        out["deltas"].append({
            "delta": delta, "a0": a0, "gamma0": gamma0, "beta0": beta0,
            "gap": beta0 - gamma0, "rows": rows,
            "refinement_delta": refine,
        })
    return out


def _remark_row(fld, delta, eps, N):
    res = cell.critical_value(fld, eps, N)
    grid = res.grid
    h = grid.h
    hn = h ** grid.n
    free = ~grid.hole_mask
    lap_psi = fields.remark_rhs_factory(delta, grid.n)(grid.points())
    lap_psi = lap_psi.reshape(grid.shape)
    lhs = float(free.sum()) * hn * res.beta_eps
    I1 = float((lap_psi[free] * res.W[free]).sum() * hn)
    I2 = eps ** -2.0 * float(lap_psi[free].sum() * hn)
    I3 = _hole_flux(fld, res.W, grid)
    balance = I1 - I2 + I3
    return {"eps": eps, "N": N, "beta_eps": res.beta_eps, "lhs": lhs,
            "I1": I1, "I2": I2, "I3": I3,
            "identity_residual": abs(lhs - balance) / abs(lhs)}


def _hole_flux(fld, W, grid):
    """Flux of a grad W through the hole boundary, normal into the hole."""
    n = grid.n
    scalar = fld.diag_axes(grid.axes)[0]
    hole = grid.hole_mask
    flux = 0.0
    for d in range(n):
        Wp = np.roll(W, -1, axis=d)
        holep = np.roll(hole, -1, axis=d)
        ap = np.roll(scalar, -1, axis=d)
        aface = 0.5 * (scalar + ap)
        # free cell below, hole cell above: normal +e_d into the hole
        face = ~hole & holep
        flux += float((aface[face] * (Wp - W)[face]).sum())
        # hole below, free above: normal -e_d into the hole
        face = hole & ~holep
        flux += float((aface[face] * (W - Wp)[face]).sum())
    return flux * grid.h ** (n - 2)


def noncritical_sweep(fld, phi, alpha, eps_list, N_cell=96, M=None,
                      slack=1e-9):
    """Sub- and super-critical hole scalings against their limit laws.

    alpha > 1: beta_hat = eps^(2(alphabar-1)) beta_{eps^alphabar} must
    vanish with log-log slope 2(alphabar - 1), and the flattened solution
    drifts to the zero limit.  alpha < 1: the shifted corrector obeys
    1 - eps^(2-2*alphabar) <= w~ <= 1 nodewise and the eps-solutions sink
    below the obstacle by at most K * eps^(2-2*alphabar) with K frozen on
    the coarsest run.

    N_cell may be one size or one per eps (the inner cell hole radius
    eps^(2*alphabar/(n-2)) shrinks along the sweep, so finer eps may need
    a finer cell grid to stay resolved).
    """
    if alpha == 1.0:
        raise ValueError("alpha = 1 is the critical regime")
    if np.isscalar(N_cell):
        N_list = [int(N_cell)] * len(eps_list)
    else:
        if len(N_cell) != len(eps_list):
            raise ValueError("N_cell list must match eps_list")
        N_list = [int(N) for e, N in
                  sorted(zip(eps_list, N_cell), reverse=True)]
    eps_list = sorted(eps_list, reverse=True)
    if M is None:
        M = default_domain_m(eps_list)
    scale0 = ScaleSet(eps_list[0], n=fld.n, alpha=alpha)
    ab = scale0.alphabar
    report = {"alpha": alpha, "alphabar": ab, "M": M, "rows": []}

    if alpha > 1.0:
        for eps, N_c in zip(eps_list, N_list):
            nc = cell.noncritical_corrector(fld, eps, alpha, N_c, M=M)
            dom = nc.dom
            u_eps = solver.solve_eps_problem(
                solver.EpsProblemSpec(field=fld, phi=phi, dom=dom))
            ubar = grids.underline_transform(u_eps, dom)
            report["rows"].append({
                "eps": eps, "beta_hat": nc.beta_hat,
                "beta_inner": nc.inner.beta_eps,
                "sup_ubar": float(np.abs(ubar).max()),
            })
        slope, res = loglog_slope([r["eps"] for r in report["rows"]],
                                  [r["beta_hat"] for r in report["rows"]])
        report["beta_hat_slope"] = slope
        report["beta_hat_fit_residual"] = res
        report["expected_slope"] = 2.0 * (ab - 1.0)
        return report

    K_hat = None
    for eps, N_c in zip(eps_list, N_list):
        nc = cell.noncritical_corrector(fld, eps, alpha, N_c, M=M)
        w_tilde_scaled = eps ** 2 * nc.W_tilde
        bound_ok = bool((w_tilde_scaled >= nc.bound_lo - slack).all()
                        and (w_tilde_scaled <= 1.0 + slack).all())
        dom = nc.dom
        u_eps = solver.solve_eps_problem(
            solver.EpsProblemSpec(field=fld, phi=phi, dom=dom))
        phi_nodes = phi.eval_axes(dom.grid.axes)
        free = dom.classes == FREE
        min_gap = float((u_eps - phi_nodes)[free].min())
        envelope = eps ** (2.0 - 2.0 * ab)
        if K_hat is None:
            K_hat = max(0.0, -min_gap) / envelope
        report["rows"].append({
            "eps": eps, "bound_lo": nc.bound_lo, "bound_ok": bound_ok,
            "min_gap": min_gap, "envelope": envelope,
            "bounded_by_K": bool(min_gap >= -K_hat * envelope - slack),
        })
    report["K_hat"] = K_hat
    return report
