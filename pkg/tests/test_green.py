"""Green's function probes against the closed-form ball kernel."""

import numpy as np
import pytest

from perfhom import fields, green, grids


IDENT = fields.ConstantField(np.eye(3))


def test_source_mass_exact_and_positive():
    probe = green.approx_green(IDENT, x0=0.0, sigma=0.1, N=48)
    assert probe.source_mass == pytest.approx(1.0, abs=1e-12)
    assert probe.G.min() >= 0.0
    assert (probe.G[probe.fixed] == 0.0).all()


def test_ball_kernel_closed_form():
    # Laplacian on the unit ball: outside the source the solution matches
    # (1/4pi)(1/r - 1); a radially symmetric mollified source leaves the
    # exterior field unchanged.
    probe = green.approx_green(IDENT, x0=0.0, sigma=0.05, N=96)
    r = 0.25
    shell = (np.abs(probe.dist - r) <= probe.grid.h) & ~probe.fixed
    measured = float(probe.G[shell].mean())
    exact = (1.0 / r - 1.0) / (4.0 * np.pi)
    assert abs(measured - exact) / exact < 0.03


def test_scalar_linearity():
    p1 = green.approx_green(IDENT, 0.0, sigma=0.1, N=48)
    p2 = green.approx_green(fields.ConstantField(2.0 * np.eye(3)),
                            0.0, sigma=0.1, N=48)
    scale = np.abs(p1.G).max()
    assert np.abs(p2.G - 0.5 * p1.G).max() < 1e-6 * scale


def test_sigma_validation():
    with pytest.raises(ValueError):
        green.approx_green(IDENT, 0.0, sigma=0.01, N=32)  # < 2h
    with pytest.raises(ValueError):
        green.approx_green(IDENT, 0.0, sigma=0.4, N=32)


def test_band_ratio_tightens_toward_source():
    out = green.almost_homogeneity_probe(IDENT, 0.0, [0.22, 0.3, 0.4],
                                         sigma=0.07, N=64)
    rows = out["rows"]
    ratios = [row["band_ratio"] for row in rows]
    assert all(r >= 1.0 for r in ratios)
    assert ratios[0] < ratios[-1]
    assert ratios[0] < 1.35
    with pytest.raises(ValueError):
        green.almost_homogeneity_probe(IDENT, 0.0, [0.1], sigma=0.07, N=64)


def test_gradient_lq_on_linear_function():
    # u = x has |grad u| = 1 everywhere: the norm is the measure of the
    # quadrature core to the power 1/q
    g = grids.BoxGrid(3, 16)
    X, _, _ = np.meshgrid(*g.axes, indexing="ij")
    vol = ((16 - 2) * g.h) ** 3
    for q in (1.0, 1.5, 2.0):
        norm = green.gradient_lq_norm(X, g, q)
        assert norm == pytest.approx(vol ** (1.0 / q), rel=1e-12)


def test_lq_trends_sub_and_supercritical():
    shrink = [0.2, 0.1, 0.05]
    sub = green.l1_gradient_test(IDENT, 1.2, shrink, N=48)
    sup = green.l1_gradient_test(IDENT, 1.8, shrink, N=48)
    assert sub["subcritical"] and not sup["subcritical"]
    sub_norms = [r["grad_lq"] for r in sub["rows"]]
    sup_norms = [r["grad_lq"] for r in sup["rows"]]
    # supercritical diverges like r^(3/q - 2) = r^(-1/3): strictly growing
    assert sup_norms[0] < sup_norms[1] < sup_norms[2]
    assert sup_norms[2] / sup_norms[1] > 1.15
    # subcritical stays bounded: the remainder vanishes like r^(3 - 2q),
    # so successive growth ratios shrink toward 1
    sub_ratios = [b / a for a, b in zip(sub_norms, sub_norms[1:])]
    assert sub_ratios[1] < sub_ratios[0]
    assert sub_ratios[1] < 1.15


def test_l1_gradient_validation():
    with pytest.raises(ValueError):
        green.l1_gradient_test(IDENT, 0.5, [0.2], N=32)
    with pytest.raises(ValueError):
        green.l1_gradient_test(IDENT, 1.2, [0.01], N=32)
