"""Obstacle solvers: enumeration oracle, comparison principle, manufactured
solutions, and the radial free-boundary shooting oracle."""

import itertools

import numpy as np
import pytest
import scipy.optimize
import scipy.sparse.linalg as spla

from perfhom import fields, grids, relax, solver, stencil
from perfhom.grids import HOLE, OUTER_BOUNDARY, ScaleSet


IDENT = fields.ConstantField(np.eye(3))


def eps_spec(phi, M=16, eps=0.5, fld=IDENT):
    dom = grids.perforate(M, ScaleSet(eps))
    return solver.EpsProblemSpec(field=fld, phi=phi, dom=dom)


# ---------------------------------------------------------------------------
# trivial chains

def test_nonpositive_obstacle_eps_problem_zero():
    phi = fields.make_obstacle("constant", c=-1.0)
    u = solver.solve_eps_problem(eps_spec(phi))
    assert np.abs(u).max() == 0.0


def test_nonpositive_obstacle_homogenized_zero():
    phi = fields.make_obstacle("constant", c=-0.5)
    spec = solver.HomogenizedSpec(abar=np.eye(3), beta0=15.0, phi=phi,
                                  grid=grids.BoxGrid(3, 10))
    u = solver.solve_homogenized(spec)
    assert np.abs(u).max() == 0.0


def test_nonpositive_obstacle_limit_zero():
    phi = fields.make_obstacle("constant", c=-1.0)
    u = solver.solve_limit_obstacle(np.eye(3), phi, grids.BoxGrid(3, 10))
    assert np.abs(u).max() == 0.0


def test_beta0_must_be_nonnegative():
    with pytest.raises(ValueError):
        solver.HomogenizedSpec(abar=np.eye(3), beta0=-1.0,
                               phi=fields.make_obstacle("constant"),
                               grid=grids.BoxGrid(3, 8))


def test_dominance_warning():
    A = np.array([[1.0, 0.6, 0.6], [0.6, 1.0, 0.0], [0.6, 0.0, 1.0]])
    assert np.linalg.eigvalsh(A)[0] > 0
    phi = fields.make_obstacle("constant", c=-1.0)
    with pytest.warns(RuntimeWarning):
        solver.solve_eps_problem(eps_spec(phi, fld=fields.ConstantField(A)))


# ---------------------------------------------------------------------------
# active-set enumeration oracle

def test_lcp_matches_exhaustive_active_set_enumeration():
    # a narrow bump meets only the 7 nodes around the center (spacing
    # 1/16 < 0.08 < sqrt(2)/16), so every active set can be enumerated
    phi = fields.make_obstacle("radial_bump", height=1.0, radius=0.08)
    spec = eps_spec(phi, M=16, eps=0.5)
    u = solver.solve_eps_problem(spec, tol_rel=1e-10)
    opr = spec.operator()
    grid = spec.dom.grid
    psi = spec.obstacle_eps()

    cand = np.argwhere(psi > 0)
    assert 1 <= len(cand) <= 12
    fixed = (spec.dom.classes == OUTER_BOUNDARY).ravel()
    L = relax.operator_matrix(opr).tocsr()
    size = L.shape[0]
    flat = np.ravel_multi_index(cand.T, grid.shape)

    feasible = []
    for bits in itertools.product((0, 1), repeat=len(flat)):
        S = flat[np.array(bits, dtype=bool)]
        pinned = fixed.copy()
        pinned[S] = True
        A = L.tolil()
        rhs = np.zeros(size)
        for i in np.where(pinned)[0]:
            A.rows[i] = [i]
            A.data[i] = [1.0]
        rhs[S] = psi.ravel()[S]
        v = spla.spsolve(A.tocsr().tocsc(), rhs)
        ok = (v >= psi.ravel() - 1e-9).all() and \
            (L @ v)[S].max(initial=-np.inf) <= 1e-9
        if ok:
            feasible.append(v.reshape(grid.shape))
    assert feasible, "no admissible active set found"
    for v in feasible:
        assert np.abs(v - u).max() < 1e-7


def test_least_supersolution_under_randomized_supersolutions():
    phi = fields.make_obstacle("sine_bump", c0=-0.2, c1=1.5)
    spec = eps_spec(phi, M=16, eps=0.5)
    u = solver.solve_eps_problem(spec, tol_rel=1e-10)
    opr = spec.operator()
    grid = spec.dom.grid
    psi = spec.obstacle_eps()
    fixed = spec.dom.classes == OUTER_BOUNDARY
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = rng.uniform(0.0, 2.0, grid.shape)
        w, _ = relax.solve_dirichlet(opr, f=g, g=0.0, fixed=fixed,
                                     tol_rel=1e-11)
        c = max(0.0, float((psi - w).max()))
        v = w + c  # -L v = g >= 0 and v >= psi: a supersolution
        assert (u <= v + 1e-8).all()


def test_obstacle_monotonicity():
    phi1 = fields.make_obstacle("sine_bump", c0=-0.3, c1=1.0)
    phi2 = fields.make_obstacle("sine_bump", c0=-0.3, c1=1.5)
    u1 = solver.solve_eps_problem(eps_spec(phi1), tol_rel=1e-10)
    u2 = solver.solve_eps_problem(eps_spec(phi2), tol_rel=1e-10)
    assert (u1 <= u2 + 1e-8).all()


# ---------------------------------------------------------------------------
# semilinear homogenized equation

def test_homogenized_residual_and_bounds():
    phi = fields.make_obstacle("constant", c=0.5)
    grid = grids.BoxGrid(3, 16)
    spec = solver.HomogenizedSpec(abar=np.eye(3), beta0=5.0, phi=phi,
                                  grid=grid)
    u, info = solver.solve_homogenized(spec, return_info=True)
    assert info["residual"] < 1e-6
    assert info["active_count"] > 0
    unknown = ~grid.boundary_mask()
    assert u[unknown].min() > 0.0
    assert u.max() < 0.5  # reaction switches off above the obstacle level


def _manufactured_error(M, beta0=10.0):
    grid = grids.BoxGrid(3, M)
    X, Y, Z = np.meshgrid(*grid.axes, indexing="ij")
    u_star = np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z)
    d = X - 0.4  # changes sign across the box
    phi = u_star - d
    F = 3.0 * np.pi ** 2 * u_star - beta0 * np.maximum(-d, 0.0)
    spec = solver.HomogenizedSpec(abar=np.eye(3), beta0=beta0, phi=phi,
                                  grid=grid, forcing=F)
    u = solver.solve_homogenized(spec, tol_rel=1e-11)
    return float(np.abs(u - u_star).max())


def test_manufactured_solution_second_order():
    errs = [_manufactured_error(M) for M in (12, 24, 48)]
    for a, b in zip(errs, errs[1:]):
        assert 3.0 < a / b < 5.0


# ---------------------------------------------------------------------------
# radial free boundary against a shooting oracle

def _shooting_reference(rho, R):
    """Radial obstacle problem for the Laplacian: contact radius and the
    exterior harmonic A (1/r - 1/R), matched C^1 to (1 - r^2/rho^2)^3."""
    def phi(r):
        return max(0.0, 1.0 - r * r / rho ** 2) ** 3

    def amp(s):
        return 6.0 * s ** 3 / rho ** 2 * (1.0 - s * s / rho ** 2) ** 2

    def gap(s):
        return phi(s) - amp(s) * (1.0 / s - 1.0 / R)

    r_star = scipy.optimize.brentq(gap, 0.02, rho - 1e-6)
    return r_star, amp(r_star)


def test_radial_contact_matches_shooting_oracle():
    M, R, rho = 96, 0.45, 0.3
    grid = grids.BoxGrid(3, M)
    opr = stencil.assemble(IDENT, grid)
    d2 = np.zeros(grid.shape)
    for dd in range(3):
        sh = [1, 1, 1]
        sh[dd] = M + 1
        d2 = d2 + ((grid.axes[dd] - 0.5) ** 2).reshape(sh)
    dist = np.sqrt(d2)
    fixed = dist >= R
    psi = np.maximum(0.0, 1.0 - d2 / rho ** 2) ** 3
    u, _ = relax.solve_lcp(opr, psi, f=0.0, g=0.0, fixed=fixed,
                           tol_rel=1e-9)
    r_star, A = _shooting_reference(rho, R)
    # exterior branch: shell average at r = 0.35 within 2%
    shell = (np.abs(dist - 0.35) <= grid.h) & ~fixed
    u_ref = A * (1.0 / 0.35 - 1.0 / R)
    assert abs(float(u[shell].mean()) - u_ref) / u_ref < 0.02
    # contact radius within two mesh widths of the shooting value
    contact = (u - psi < 1e-6) & (psi > 0)
    r_contact = float(dist[contact].max())
    assert abs(r_contact - r_star) <= 2.0 * grid.h
