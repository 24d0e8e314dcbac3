"""Cell grids, perforated domain grids and the flattening transform.

Two structured node layouts are used throughout:

* ``PeriodicCellGrid`` - N nodes per axis at -1/2 + i*h on the unit cell,
  periodic topology, optional central hole (periodic distance to the integer
  lattice <= r).
* ``BoxGrid`` / ``PerforatedDomain`` - the unit box [0, 1]^n with M intervals
  per axis (M+1 nodes), Dirichlet outer boundary, and holes of radius a_eps
  centered on the lattice eps * Z^n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FREE = 0
HOLE = 1
OUTER_BOUNDARY = 2


class GridError(ValueError):
    """Raised for unresolvable or inconsistent grid requests."""


@dataclass(frozen=True)
class ScaleSet:
    """The scale bookkeeping (eps, alpha) -> (a_eps, b_eps, abar_eps).

    alpha = 1 is the critical hole size a_eps = eps^(n/(n-2)); alphabar is
    the exponent with abar^(eps^alphabar) = a^(eps^alpha) / eps.
    """

    eps: float
    n: int = 3
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise GridError(f"eps must be in (0,1), got {self.eps}")
        if self.alpha <= (self.n - 2) / self.n:
            raise GridError(
                f"alpha must exceed (n-2)/n = {(self.n - 2) / self.n:g}")

    @property
    def a_eps(self):
        return self.eps ** (self.n * self.alpha / (self.n - 2))

    @property
    def b_eps(self):
        return (self.eps * self.a_eps) ** 0.5

    @property
    def abar_eps(self):
        return self.a_eps / self.eps

    @property
    def alphabar(self):
        return 0.5 * self.n * self.alpha - 0.5 * (self.n - 2)


class PeriodicCellGrid:
    """N-per-axis periodic grid on Q1 = [-1/2, 1/2]^n with a central hole."""

    def __init__(self, n, N, hole_radius=0.0, strict=True):
        if N < 8:
            raise GridError("cell grid needs N >= 8")
        if not 0.0 <= hole_radius < 0.5:
            raise GridError("hole radius must lie in [0, 1/2)")
        self.n = int(n)
        self.N = int(N)
        self.h = 1.0 / N
        self.r = float(hole_radius)
        self.periodic = True
        if strict and 0.0 < hole_radius < 2.0 * self.h:
            raise GridError(
                f"hole radius {hole_radius:g} under-resolved at N={N}; "
                f"need N >= {int(np.ceil(2.0 / hole_radius))}")
        self.shape = (self.N,) * self.n
        self.axes = [-0.5 + self.h * np.arange(self.N)
                     for _ in range(self.n)]
        self.hole_mask = self._distance_sq() <= hole_radius**2 \
            if hole_radius > 0 else np.zeros(self.shape, dtype=bool)

    def _distance_sq(self):
        # node coords already lie in [-1/2, 1/2): periodic distance to Z^n
        # equals plain distance to the origin
        d2 = np.zeros(self.shape)
        for d in range(self.n):
            shape = [1] * self.n
            shape[d] = self.N
            d2 = d2 + (self.axes[d] ** 2).reshape(shape)
        return d2

    def distance_to_lattice(self):
        return np.sqrt(self._distance_sq())

    @property
    def fixed_mask(self):
        return self.hole_mask

    def points(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def build_cell_grid(n, N, hole_radius=0.0, strict=True):
    """Periodic cell grid with hole_mask = {periodic dist to Z^n <= r}."""
    return PeriodicCellGrid(n, N, hole_radius, strict=strict)


class BoxGrid:
    """Axis-aligned box with uniform spacing and Dirichlet outer layer."""

    def __init__(self, n, M, lo=0.0, hi=1.0):
        if M < 4:
            raise GridError("box grid needs M >= 4 intervals")
        self.n = int(n)
        self.M = int(M)
        self.lo = float(lo)
        self.hi = float(hi)
        self.h = (hi - lo) / M
        self.periodic = False
        self.shape = (self.M + 1,) * self.n
        self.axes = [lo + self.h * np.arange(self.M + 1)
                     for _ in range(self.n)]

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for d in range(self.n):
            idx = [slice(None)] * self.n
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask

    @property
    def fixed_mask(self):
        return self.boundary_mask()

    def points(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def _lattice_distance(grid, eps):
    """Distance from each node to the nearest point of eps * Z^n."""
    d2 = np.zeros(grid.shape)
    for d in range(grid.n):
        a = grid.axes[d]
        w = a - eps * np.round(a / eps)
        shape = [1] * grid.n
        shape[d] = len(a)
        d2 = d2 + (w**2).reshape(shape)
    return np.sqrt(d2)


class PerforatedDomain:
    """Unit box with holes B_{a_eps}(eps k) and node classification.

    classes: FREE, HOLE (with the subset ``hole_boundary``), OUTER_BOUNDARY.
    ``away_mask`` marks FREE nodes outside the intermediate balls T_{b_eps}.
    """

    def __init__(self, grid, scale, classes, hole_boundary, lattice_dist):
        self.grid = grid
        self.scale = scale
        self.classes = classes
        self.hole_boundary = hole_boundary
        self.lattice_dist = lattice_dist
        self.away_mask = (classes == FREE) & (lattice_dist > scale.b_eps)

    @property
    def n(self):
        return self.grid.n

    @property
    def shape(self):
        return self.grid.shape

    def hole_centers(self):
        """All lattice points eps*k whose b_eps-ball meets the closed box."""
        eps = self.scale.eps
        b = self.scale.b_eps
        kmax = int(np.floor((1.0 + b) / eps)) + 1
        ks = np.arange(-kmax, kmax + 1)
        centers = []
        for k in np.stack(np.meshgrid(*[ks] * self.n, indexing="ij"),
                          axis=-1).reshape(-1, self.n):
            c = eps * k
            if np.all(c >= -b) and np.all(c <= 1.0 + b):
                centers.append(c)
        return np.asarray(centers)


def perforate(M, scale, strict=True):
    """Classify the nodes of the unit box against the hole lattice.

    Requires 1/eps integer and M a multiple of 1/eps so that the hole
    centers are grid nodes.  With strict=True an unresolved hole radius
    (a_eps < 2h) is an error; otherwise each hole still contains at least
    its center node.
    """
    eps = scale.eps
    inv = 1.0 / eps
    if abs(inv - round(inv)) > 1e-9:
        raise GridError(f"1/eps must be an integer, got eps={eps}")
    inv = int(round(inv))
    if M % inv != 0:
        raise GridError(f"M={M} must be a multiple of 1/eps={inv}")
    grid = BoxGrid(scale.n, M)
    a = scale.a_eps
    if strict and a < 2.0 * grid.h:
        raise GridError(
            f"hole radius a_eps={a:g} under-resolved at M={M}; "
            f"need M >= {int(np.ceil(2.0 / a / inv) * inv)}")
    dist = _lattice_distance(grid, eps)
    classes = np.full(grid.shape, FREE, dtype=np.int8)
    classes[dist <= a] = HOLE
    classes[grid.boundary_mask()] = OUTER_BOUNDARY

    hole = classes == HOLE
    interior_nb = np.ones(grid.shape, dtype=bool)
    for d in range(grid.n):
        shifted_lo = np.ones(grid.shape, dtype=bool)
        shifted_hi = np.ones(grid.shape, dtype=bool)
        sl_lo = [slice(None)] * grid.n
        sl_hi = [slice(None)] * grid.n
        sl_lo[d] = slice(1, None)
        sl_hi[d] = slice(None, -1)
        shifted_lo[tuple(sl_lo)] = hole[tuple(sl_hi)]
        shifted_hi[tuple(sl_hi)] = hole[tuple(sl_lo)]
        interior_nb &= shifted_lo & shifted_hi
    hole_boundary = hole & ~interior_nb
    return PerforatedDomain(grid, scale, classes, hole_boundary, dist)


def underline_transform(u, dom):
    """Flatten u inside each ball B_{b_eps}(eps k) to its shell minimum.

    The shell is the node set with distance to the center in
    [b_eps - h*sqrt(n), b_eps]; an empty shell means the intermediate
    radius is under-resolved.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != dom.shape:
        raise GridError("field shape does not match the domain grid")
    grid = dom.grid
    b = dom.scale.b_eps
    thick = grid.h * np.sqrt(grid.n)
    if b < thick:
        raise GridError(
            f"b_eps={b:g} under-resolved (shell thickness {thick:g})")
    out = u.copy()
    axes = grid.axes
    for center in dom.hole_centers():
        # local index window covering the ball
        sls, local_axes = [], []
        for d in range(grid.n):
            i0 = int(np.floor((center[d] - b - grid.lo) / grid.h))
            i1 = int(np.ceil((center[d] + b - grid.lo) / grid.h))
            i0 = max(i0, 0)
            i1 = min(i1, grid.M)
            if i0 > i1:
                sls = None
                break
            sls.append(slice(i0, i1 + 1))
            local_axes.append(axes[d][i0:i1 + 1] - center[d])
        if sls is None:
            continue
        d2 = np.zeros([s.stop - s.start for s in sls])
        for d in range(grid.n):
            shape = [1] * grid.n
            shape[d] = len(local_axes[d])
            d2 = d2 + (local_axes[d] ** 2).reshape(shape)
        dist = np.sqrt(d2)
        inside = dist <= b
        if not inside.any():
            continue
        shell = inside & (dist >= b - thick)
        if not shell.any():
            raise GridError("empty flattening shell; refine the grid")
        m = float(u[tuple(sls)][shell].min())
        block = out[tuple(sls)]
        # write strictly inside: neighboring balls may share a tangency
        # node at distance exactly b (2 b_eps = eps at eps = 1/2), and
        # leaving it untouched keeps the transform idempotent
        block[dist < b] = m
        out[tuple(sls)] = block
    return out
