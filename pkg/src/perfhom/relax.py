"""Red-black SOR driver and the linear/obstacle solvers built on it.

All solvers relax the weighted-stencil form

    L u = sum_d (w_lo[d] u(x-e_d) + w_hi[d] u(x+e_d)) + cross(u) - diag * u

with the compiled 3-D kernel when it applies (no cross weights) and the
numpy fallback otherwise.  The relaxation factor is tuned from the grid
size and drops back to plain Gauss-Seidel if the residual diverges.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .kernels import fallback

MAX_SWEEPS_DEFAULT = 10**6


class SolverError(RuntimeError):
    """Non-convergence; carries the final residual and sweep count."""

    def __init__(self, message, residual=None, sweeps=None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


def _full(a, shape):
    """Contiguous writable float array of the given shape (broadcast+copy)."""
    out = np.ascontiguousarray(np.broadcast_to(a, shape), dtype=float)
    return out if out.flags.writeable else out.copy()


def tuned_omega(shape):
    """Model SOR factor 2 / (1 + sin(pi h)) clipped to [1, 1.95]."""
    nmax = max(shape)
    return float(np.clip(2.0 / (1.0 + np.sin(np.pi / nmax)), 1.0, 1.95))


class RelaxProblem:
    """One stencil system: weights, unknown mask, and the sweep loop."""

    def __init__(self, w_lo, w_hi, diag, idxp, idxn, unknown, cross=None):
        self.shape = tuple(unknown.shape)
        self.n = len(self.shape)
        full = lambda a: _full(a, self.shape)
        self.w_lo = [full(a) for a in w_lo]
        self.w_hi = [full(a) for a in w_hi]
        self.diag = full(diag)
        if self.diag.min() <= 0:
            raise SolverError("stencil diagonal must be positive")
        self.idxp = [np.ascontiguousarray(i, dtype=np.intp) for i in idxp]
        self.idxn = [np.ascontiguousarray(i, dtype=np.intp) for i in idxn]
        self.unknown = np.ascontiguousarray(unknown, dtype=bool)
        self.cross = {ij: full(a) for ij, a in (cross or {}).items()}
        self._core = kernels.get_core() if (self.n == 3 and not self.cross) \
            else None
        self.backend = "compiled" if self._core is not None else "fallback"
        if self._core is not None:
            self._unknown8 = np.ascontiguousarray(self.unknown,
                                                  dtype=np.uint8)
        else:
            parity = np.zeros(self.shape, dtype=np.int64)
            for d in range(self.n):
                sh = [1] * self.n
                sh[d] = self.shape[d]
                parity = parity + np.arange(self.shape[d]).reshape(sh)
            self._color_masks = [
                self.unknown & (parity % 2 == c) for c in (0, 1)]

    @classmethod
    def from_operator(cls, opr, unknown):
        return cls(opr.w, opr.w, opr.diag, opr.idxp, opr.idxn, unknown,
                   cross=opr.cross)

    def apply(self, u):
        return fallback.apply_stencil(np.asarray(u, dtype=float), self.w_lo,
                                      self.w_hi, self.diag, self.idxp,
                                      self.idxn, self.cross)

    def _flat_args(self):
        return (self.w_lo[0], self.w_hi[0], self.w_lo[1], self.w_hi[1],
                self.w_lo[2], self.w_hi[2], self.diag, self._unknown8,
                self.idxp[0], self.idxn[0], self.idxp[1], self.idxn[1],
                self.idxp[2], self.idxn[2])

    def residual(self, u, rhs, psi=None):
        """Max equation residual (or complementarity residual if psi)."""
        u = _full(u, self.shape)
        rhs = _full(rhs, self.shape)
        if self._core is not None:
            args = (u, rhs) + self._flat_args()
            if psi is None:
                return float(self._core.residual_max3(*args))
            return float(self._core.lcp_residual_max3(
                *args, _full(psi, self.shape)))
        if psi is None:
            return fallback.residual_max(u, rhs, self.w_lo, self.w_hi,
                                         self.diag, self.unknown, self.idxp,
                                         self.idxn, self.cross)
        return fallback.lcp_residual_max(u, rhs, self.w_lo, self.w_hi,
                                         self.diag, self.unknown, self.idxp,
                                         self.idxn, psi, self.cross)

    def _sweep(self, u, rhs, omega, psi):
        if self._core is not None:
            args = self._flat_args()
            self._core.sweep_color3(u, rhs, *args, 0, omega, psi)
            self._core.sweep_color3(u, rhs, *args, 1, omega, psi)
        else:
            for mask in self._color_masks:
                fallback.sweep_color(u, rhs, self.w_lo, self.w_hi, self.diag,
                                     mask, self.idxp, self.idxn, omega,
                                     psi=psi, cross=self.cross)

    def solve(self, rhs, u0, psi=None, tol_abs=1e-10,
              max_sweeps=MAX_SWEEPS_DEFAULT, omega=None):
        """Relax to max-residual <= tol_abs; returns (u, info).

        Starts with tuned SOR; if the residual grows by an order of
        magnitude the iteration restarts as plain Gauss-Seidel, and failing
        that too raises SolverError.
        """
        rhs = _full(rhs, self.shape)
        if psi is not None:
            psi = _full(psi, self.shape)
        if omega is None:
            omega = tuned_omega(self.shape)
        u = np.ascontiguousarray(u0, dtype=float).copy()
        if psi is not None:
            u[self.unknown] = np.maximum(u[self.unknown], psi[self.unknown])
        u_start = u.copy()
        check = int(np.clip(max(self.shape) // 2, 10, 200))
        sweeps = 0
        best = np.inf
        res = self.residual(u, rhs, psi)
        retried = False
        while res > tol_abs:
            if sweeps >= max_sweeps:
                raise SolverError(
                    f"no convergence after {sweeps} sweeps "
                    f"(residual {res:.3e}, tol {tol_abs:.3e})",
                    residual=res, sweeps=sweeps)
            for _ in range(min(check, max_sweeps - sweeps)):
                self._sweep(u, rhs, omega, psi)
                sweeps += 1
            res = self.residual(u, rhs, psi)
            if not np.isfinite(res) or (res > 10.0 * best
                                        and sweeps > 2 * check):
                if not retried and omega > 1.0:
                    retried = True
                    omega = 1.0
                    u = u_start.copy()
                    best = np.inf
                    res = self.residual(u, rhs, psi)
                    continue
                raise SolverError(
                    f"relaxation diverged (residual {res:.3e} after "
                    f"{sweeps} sweeps)", residual=res, sweeps=sweeps)
            best = min(best, res)
        info = {"sweeps": sweeps, "residual": res, "omega": omega,
                "backend": self.backend, "converged": True}
        return u, info


def _tolerance(opr, f, g, tol_rel):
    scale = float(np.max(np.abs(f))) if np.size(f) else 0.0
    scale += float(np.max(np.abs(g))) / opr.h**2 if np.size(g) else 0.0
    return tol_rel * (scale if scale > 0 else 1.0)


def solve_dirichlet(opr, f, g=0.0, fixed=None, tol_rel=1e-8,
                    max_sweeps=MAX_SWEEPS_DEFAULT, omega=None):
    """Solve L u = -f with u = g on the fixed set; returns (u, info).

    The fixed set defaults to the grid's own (hole or outer boundary).
    The tolerance is tol_rel * (|f|_inf + |g|_inf / h^2).
    """
    if fixed is None:
        fixed = opr.grid.fixed_mask
    unknown = ~fixed
    u0 = np.zeros(opr.grid.shape)
    u0[fixed] = np.broadcast_to(g, opr.grid.shape)[fixed]
    prob = RelaxProblem.from_operator(opr, unknown)
    rhs = -np.broadcast_to(f, opr.grid.shape)
    return prob.solve(rhs, u0, tol_abs=_tolerance(opr, f, g, tol_rel),
                      max_sweeps=max_sweeps, omega=omega)


def solve_lcp(opr, psi, f=0.0, g=0.0, fixed=None, tol_rel=1e-8,
              max_sweeps=MAX_SWEEPS_DEFAULT, omega=None):
    """Projected SOR for min(-L u - f, u - psi) = 0 above the obstacle.

    Fixed nodes keep the value g; unknowns satisfy the complementarity
    system at tolerance tol_rel * (|f|_inf + (|g|_inf + |psi|_inf) / h^2).
    """
    if fixed is None:
        fixed = opr.grid.fixed_mask
    unknown = ~fixed
    psi = np.broadcast_to(psi, opr.grid.shape).astype(float)
    u0 = np.zeros(opr.grid.shape)
    u0[fixed] = np.broadcast_to(g, opr.grid.shape)[fixed]
    gpsi = max(float(np.max(np.abs(g))), float(np.max(np.abs(psi))))
    tol_abs = tol_rel * max(
        float(np.max(np.abs(f))) + gpsi / opr.h**2, 1.0)
    prob = RelaxProblem.from_operator(opr, unknown)
    rhs = -np.broadcast_to(f, opr.grid.shape)
    return prob.solve(rhs, u0, psi=psi, tol_abs=tol_abs,
                      max_sweeps=max_sweeps, omega=omega)


def operator_matrix(opr):
    """L as a scipy sparse CSR matrix over all grid nodes (row-major)."""
    import scipy.sparse as sp

    shape = opr.grid.shape
    size = int(np.prod(shape))
    flat = np.arange(size).reshape(shape)
    rows, cols, vals = [], [], []

    def add(weight, *shifts):
        nb = flat
        for d, which in shifts:
            idx = opr.idxp[d] if which < 0 else opr.idxn[d]
            nb = nb.take(idx, axis=d)
        rows.append(flat.ravel())
        cols.append(nb.ravel())
        vals.append(np.broadcast_to(weight, shape).ravel())

    add(-opr.diag)
    for d in range(opr.n):
        add(opr.w[d], (d, -1))
        add(opr.w[d], (d, +1))
    for (i, j), w in opr.cross.items():
        add(w, (i, +1), (j, +1))
        add(w, (i, -1), (j, -1))
        add(-w, (i, +1), (j, -1))
        add(-w, (i, -1), (j, +1))
    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(size, size))
    return A.tocsr()


def invariant_measure(opr, tol_rel=1e-11, max_sweeps=MAX_SWEEPS_DEFAULT):
    """Positive solution of L^T m = 0 normalized to h^n * sum(m) = 1.

    Diagonal fields use transposed Gauss-Seidel sweeps (the transpose is
    again an axis stencil, with neighbor weights gathered from the source
    node).  Fields with cross terms go through a sparse direct solve.
    """
    if opr._invariant_measure is not None:
        return opr._invariant_measure
    if not opr.grid.periodic:
        raise SolverError("invariant measure requires a periodic grid")
    shape = opr.grid.shape
    hn = opr.h ** opr.n
    origin = (0,) * opr.n

    if opr.cross:
        import scipy.sparse.linalg as spla

        A = operator_matrix(opr).T.tocsr()
        size = A.shape[0]
        # pin the origin at 1 and solve the deflated system
        keep = np.ones(size, dtype=bool)
        keep[0] = False
        rhs = -A[:, 0].toarray().ravel()[keep]
        sub = A[keep][:, keep]
        m = np.ones(size)
        m[keep] = spla.spsolve(sub.tocsc(), rhs)
        m = m.reshape(shape)
    else:
        w_lo = [opr.w[d].take(opr.idxp[d], axis=d) for d in range(opr.n)]
        w_hi = [opr.w[d].take(opr.idxn[d], axis=d) for d in range(opr.n)]
        unknown = np.ones(shape, dtype=bool)
        unknown[origin] = False
        prob = RelaxProblem(w_lo, w_hi, opr.diag, opr.idxp, opr.idxn,
                            unknown)
        tol_abs = tol_rel * float(opr.diag.max())
        m, _ = prob.solve(0.0, np.ones(shape), tol_abs=tol_abs,
                          max_sweeps=max_sweeps)

    # the pinned origin absorbs the deflation defect (columns of L^T sum
    # to zero, so its residual is minus the sum of all the others); check
    # the equation on the remaining nodes
    res_field = np.abs(opr.transpose_apply(m))
    res_field[origin] = 0.0
    full_res = float(res_field.max())
    if full_res > 100.0 * tol_rel * float(opr.diag.max()):
        raise SolverError(f"invariant measure residual {full_res:.3e} "
                          f"too large", residual=full_res)
    total = hn * float(m.sum())
    if total <= 0 or m.min() < -1e-9 * abs(m).max():
        raise SolverError("invariant measure is not positive")
    m = np.maximum(m / total, 0.0)
    opr._invariant_measure = m
    return m


def solve_periodic(opr, f, normalization="min_zero", tol_rel=1e-10,
                   max_sweeps=MAX_SWEEPS_DEFAULT, omega=None):
    """Solve L u = kappa - f on the periodic cell; returns (u, kappa, info).

    kappa = <m, f> (with the invariant measure m) is the unique constant
    making the system solvable; the one-dimensional kernel is removed by
    pinning the origin node and the result is shifted per `normalization`
    ("min_zero" or "mean_zero").
    """
    if not opr.grid.periodic:
        raise SolverError("solve_periodic requires a periodic grid")
    f = np.broadcast_to(f, opr.grid.shape).astype(float)
    m = invariant_measure(opr)
    hn = opr.h ** opr.n
    kappa = hn * float((m * f).sum())
    rhs = kappa - f
    unknown = np.ones(opr.grid.shape, dtype=bool)
    unknown[(0,) * opr.n] = False
    prob = RelaxProblem.from_operator(opr, unknown)
    scale = float(np.max(np.abs(rhs)))
    tol_abs = tol_rel * (scale if scale > 0 else 1.0)
    u, info = prob.solve(rhs, np.zeros(opr.grid.shape), tol_abs=tol_abs,
                         max_sweeps=max_sweeps, omega=omega)
    if normalization == "min_zero":
        u -= u.min()
    elif normalization == "mean_zero":
        u -= u.mean()
    elif normalization != "none":
        raise ValueError(f"unknown normalization {normalization!r}")
    info = dict(info, kappa=kappa)
    return u, kappa, info
