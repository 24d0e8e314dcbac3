"""Backend equivalence: compiled sweeps must reproduce the numpy fallback."""

import numpy as np
import pytest

from perfhom import fields, grids, kernels, relax, stencil


def _poisson_problem(N=12):
    grid = grids.BoxGrid(3, N)
    opr = stencil.assemble(fields.ConstantField(np.diag([1.0, 2.0, 0.5])),
                           grid)
    X, Y, Z = np.meshgrid(*grid.axes, indexing="ij")
    f = np.sin(np.pi * X) * np.sin(2 * np.pi * Y) * Z
    return grid, opr, f


def _fallback_problem(opr, unknown, monkeypatch):
    monkeypatch.setenv("PERFHOM_FORCE_FALLBACK", "1")
    prob = relax.RelaxProblem.from_operator(opr, unknown)
    monkeypatch.delenv("PERFHOM_FORCE_FALLBACK")
    return prob


@pytest.mark.skipif(not kernels.compiled_available(),
                    reason="compiled kernel not built")
def test_sweeps_byte_identical(monkeypatch):
    grid, opr, f = _poisson_problem()
    unknown = ~grid.boundary_mask()
    fast = relax.RelaxProblem.from_operator(opr, unknown)
    slow = _fallback_problem(opr, unknown, monkeypatch)
    assert fast.backend == "compiled" and slow.backend == "fallback"
    u1 = np.zeros(grid.shape)
    u2 = np.zeros(grid.shape)
    rhs = relax._full(-f, grid.shape)
    for _ in range(15):
        fast._sweep(u1, rhs, 1.7, None)
        slow._sweep(u2, rhs, 1.7, None)
    assert np.abs(u1 - u2).max() == 0.0
    assert fast.residual(u1, rhs) == slow.residual(u2, rhs)


@pytest.mark.skipif(not kernels.compiled_available(),
                    reason="compiled kernel not built")
def test_projected_sweeps_byte_identical(monkeypatch):
    grid, opr, f = _poisson_problem()
    unknown = ~grid.boundary_mask()
    psi = relax._full(0.02, grid.shape)
    fast = relax.RelaxProblem.from_operator(opr, unknown)
    slow = _fallback_problem(opr, unknown, monkeypatch)
    u1 = np.zeros(grid.shape)
    u2 = np.zeros(grid.shape)
    rhs = relax._full(-f, grid.shape)
    for _ in range(15):
        fast._sweep(u1, rhs, 1.5, psi)
        slow._sweep(u2, rhs, 1.5, psi)
    assert np.abs(u1 - u2).max() == 0.0
    assert fast.residual(u1, rhs, psi) == slow.residual(u2, rhs, psi)


def test_cross_terms_route_to_fallback():
    A = np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 1.0]])
    grid = grids.BoxGrid(3, 8)
    opr = stencil.assemble(fields.ConstantField(A), grid)
    prob = relax.RelaxProblem.from_operator(opr, ~grid.boundary_mask())
    assert prob.backend == "fallback"


def test_apply_matches_sparse_matrix_periodic():
    A = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.0], [0.1, 0.0, 1.5]])
    grid = grids.build_cell_grid(3, 8)
    opr = stencil.assemble(fields.ConstantField(A), grid)
    mat = relax.operator_matrix(opr)
    rng = np.random.default_rng(21)
    u = rng.standard_normal(grid.shape)
    direct = opr.apply(u).ravel()
    via_mat = mat @ u.ravel()
    assert np.abs(direct - via_mat).max() < 1e-12


def test_apply_matches_sparse_matrix_box():
    grid = grids.BoxGrid(3, 6)
    fld = fields.make_separable_field(
        lambda x, y, z: 1.0 + 0.5 * np.cos(2 * np.pi * x) ** 2 + 0.0 * (y + z))
    opr = stencil.assemble(fld, grid)
    mat = relax.operator_matrix(opr)
    rng = np.random.default_rng(22)
    u = rng.standard_normal(grid.shape)
    assert np.abs(opr.apply(u).ravel() - mat @ u.ravel()).max() < 1e-12


def test_fallback_neighbor_sum_cross_signs():
    # cross stencil on u = x*y must produce +2w per unit weight
    grid = grids.build_cell_grid(3, 8)
    idxp, idxn = stencil.neighbor_indices(grid)
    X, Y, _ = np.meshgrid(*grid.axes, indexing="ij")
    u = X * Y
    w = {(0, 1): np.full(grid.shape, 0.25)}
    zero = [np.zeros(grid.shape)] * 3
    from perfhom.kernels import fallback
    S = fallback.neighbor_sum(u, zero, zero, idxp, idxn, cross=w)
    h = grid.h
    inner = tuple(slice(1, -1) for _ in range(3))
    # (upp + umm - upm - ump) = 4 h^2 D_xy u = 4 h^2 for u = x*y
    assert np.abs(S[inner] - 0.25 * 4.0 * h * h).max() < 1e-12
