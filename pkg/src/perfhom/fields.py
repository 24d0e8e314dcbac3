"""Periodic coefficient fields a_ij(y) and obstacle functions.

All fields are 1-periodic, symmetric and uniformly elliptic.  Three families
are provided: constant matrices, scalar fields c(y)*I given by an analytic
formula, and grid-backed scalar fields obtained by solving a periodic Poisson
problem for a smooth bump potential (the counterexample coefficient
(2+psi(y))*I with Laplacian(psi) = g_d(y) - g_d(y - e1/4)).
"""

from __future__ import annotations

import numpy as np


class FieldError(ValueError):
    """Raised for invalid coefficient-field or obstacle constructions."""


# ---------------------------------------------------------------------------
# periodic multilinear interpolation helpers (grid-backed scalar fields)

def _wrap_index_weight(coords, N):
    """Map cell coordinates (node 0 at -1/2) to base indices and weights."""
    s = (np.asarray(coords, dtype=float) + 0.5) * N
    i0 = np.floor(s).astype(np.int64)
    w = s - i0
    return i0 % N, w


def periodic_multilinear(values, points):
    """Interpolate a periodic nodal grid at arbitrary points.

    values has shape (N,)*n with node i at coordinate -1/2 + i/N; points has
    shape (m, n).  Linear in each axis, periodic wrap everywhere.
    """
    values = np.asarray(values, dtype=float)
    n = values.ndim
    N = values.shape[0]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    i0 = np.empty_like(pts, dtype=np.int64)
    w = np.empty_like(pts)
    for d in range(n):
        i0[:, d], w[:, d] = _wrap_index_weight(pts[:, d], N)
    out = np.zeros(pts.shape[0])
    for corner in range(1 << n):
        idx = []
        weight = np.ones(pts.shape[0])
        for d in range(n):
            if corner >> d & 1:
                idx.append((i0[:, d] + 1) % N)
                weight *= w[:, d]
            else:
                idx.append(i0[:, d])
                weight *= 1.0 - w[:, d]
        out += weight * values[tuple(idx)]
    return out


def periodic_multilinear_axes(values, axes):
    """Interpolate a periodic nodal grid on a tensor grid of points.

    axes is a sequence of n 1-D coordinate arrays; returns an array of shape
    (len(axes[0]), ..., len(axes[n-1])).  Uses outer (ix_) gathers so the full
    point cloud is never materialized.
    """
    values = np.asarray(values, dtype=float)
    n = values.ndim
    N = values.shape[0]
    i0, w = [], []
    for d in range(n):
        i, ww = _wrap_index_weight(axes[d], N)
        i0.append(i)
        w.append(ww)
    out = np.zeros([len(a) for a in axes])
    for corner in range(1 << n):
        idx, weight = [], []
        for d in range(n):
            if corner >> d & 1:
                idx.append((i0[d] + 1) % N)
                weight.append(w[d])
            else:
                idx.append(i0[d])
                weight.append(1.0 - w[d])
        term = values[np.ix_(*idx)]
        for d in range(n):
            shape = [1] * n
            shape[d] = len(axes[d])
            term = term * weight[d].reshape(shape)
        out += term
    return out


# ---------------------------------------------------------------------------
# coefficient fields

class CoefficientField:
    """Symmetric 1-periodic matrix field with ellipticity bounds.

    Subclasses implement ``diag_axes`` / ``scalar_axes`` for tensor-grid
    evaluation and ``sample`` for scattered points.  Fields are immutable
    after construction and safe to share between threads.
    """

    kind = "abstract"

    def __init__(self, n, lam, Lam, smoothness_note=""):
        if n < 3:
            raise FieldError(f"dimension must be >= 3, got {n}")
        self.n = int(n)
        self.lam = float(lam)
        self.Lam = float(Lam)
        self.period = 1.0
        self.smoothness_note = smoothness_note

    @property
    def is_diagonal(self):
        return True

    def diag_axes(self, axes):
        """a_11..a_nn on the tensor grid spanned by 1-D coordinate arrays."""
        raise NotImplementedError

    def offdiag_axes(self, axes):
        """Nonzero strictly-upper entries {(i, j): array} on a tensor grid."""
        return {}

    def sample(self, points):
        """Full matrices at scattered points, shape (m, n, n)."""
        raise NotImplementedError

    def matrix(self, y):
        return self.sample(np.asarray(y, dtype=float).reshape(1, -1))[0]

    def to_spec(self):
        raise NotImplementedError


class ConstantField(CoefficientField):
    kind = "constant"

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12):
            raise FieldError("coefficient matrix must be square symmetric")
        eig = np.linalg.eigvalsh(0.5 * (A + A.T))
        if eig[0] <= 0:
            raise FieldError(f"coefficient matrix must be positive definite "
                             f"(min eigenvalue {eig[0]:g})")
        super().__init__(n, eig[0], eig[-1], smoothness_note="constant")
        self.A = 0.5 * (A + A.T)

    @property
    def is_diagonal(self):
        off = self.A - np.diag(np.diag(self.A))
        return not np.any(off)

    def diag_axes(self, axes):
        shape = [len(a) for a in axes]
        return [np.full(shape, self.A[d, d]) for d in range(self.n)]

    def offdiag_axes(self, axes):
        shape = [len(a) for a in axes]
        out = {}
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if self.A[i, j] != 0.0:
                    out[(i, j)] = np.full(shape, self.A[i, j])
        return out

    def sample(self, points):
        m = np.atleast_2d(points).shape[0]
        return np.broadcast_to(self.A, (m, self.n, self.n)).copy()

    def to_spec(self):
        return {"kind": "constant", "matrix": self.A.tolist()}


class ScalarField(CoefficientField):
    """Field of the form a(y) = c(y) * I for a positive periodic scalar."""

    def scalar_axes(self, axes):
        raise NotImplementedError

    def scalar_points(self, points):
        raise NotImplementedError

    def diag_axes(self, axes):
        c = self.scalar_axes(axes)
        return [c] * self.n

    def sample(self, points):
        c = self.scalar_points(points)
        eye = np.eye(self.n)
        return c[:, None, None] * eye[None, :, :]


class SeparableField(ScalarField):
    kind = "separable"

    def __init__(self, cfunc, n=3, name="custom", params=None,
                 audit_per_axis=32):
        self.cfunc = cfunc
        self.name = name
        self.params = dict(params or {})
        ax = np.linspace(-0.5, 0.5, audit_per_axis, endpoint=False)
        sampled = self._eval_axes(cfunc, [ax] * n, n)
        cmin, cmax = float(sampled.min()), float(sampled.max())
        if cmin <= 0:
            raise FieldError(f"scalar coefficient not positive on the audit "
                             f"grid (min {cmin:g})")
        super().__init__(n, cmin, cmax, smoothness_note="analytic scalar")

    @staticmethod
    def _eval_axes(cfunc, axes, n):
        grids = []
        for d, a in enumerate(axes):
            shape = [1] * n
            shape[d] = len(a)
            grids.append(np.asarray(a, dtype=float).reshape(shape))
        return np.broadcast_to(cfunc(*grids), [len(a) for a in axes]).copy()

    def scalar_axes(self, axes):
        return self._eval_axes(self.cfunc, axes, self.n)

    def scalar_points(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.cfunc(*[pts[:, d] for d in range(self.n)]),
                          dtype=float) * np.ones(pts.shape[0])

    def to_spec(self):
        return {"kind": "separable", "name": self.name, "params": self.params}


class GridScalarField(ScalarField):
    """Scalar field backed by nodal samples, periodic multilinear interp."""

    kind = "grid_scalar"

    def __init__(self, values, n=None, smoothness_note="grid-backed scalar"):
        values = np.asarray(values, dtype=float)
        n = values.ndim if n is None else n
        cmin, cmax = float(values.min()), float(values.max())
        if cmin <= 0:
            raise FieldError("grid scalar must be positive everywhere")
        super().__init__(n, cmin, cmax, smoothness_note=smoothness_note)
        self.values = values
        self.N = values.shape[0]

    def scalar_axes(self, axes):
        return periodic_multilinear_axes(self.values, axes)

    def scalar_points(self, points):
        return periodic_multilinear(self.values, points)

    def to_spec(self):
        return {"kind": "grid_scalar", "N": self.N}


# ---------------------------------------------------------------------------
# constructors

def make_constant_field(A):
    """Constant coefficient field; lam/Lam are the extreme eigenvalues."""
    return ConstantField(A)


def make_separable_field(cfunc, n=3, name="custom", params=None):
    """Field c(y)*I for a smooth positive 1-periodic scalar c.

    cfunc must accept n broadcastable coordinate arrays.  Positivity and the
    ellipticity certificates are audited on a dense per-axis sample.
    """
    return SeparableField(cfunc, n=n, name=name, params=params)


def bump(points_norm, delta):
    """Smooth cutoff supported in B_delta, equal to 1 on B_{delta/2}.

    Standard mollifier profile exp(1 - 1/(1 - t^2)) in the shell, with
    t = 2|y|/delta - 1 clamped to [0, 1).
    """
    r = np.asarray(points_norm, dtype=float)
    t = np.clip(2.0 * r / delta - 1.0, 0.0, 1.0)
    out = np.zeros_like(t)
    inner = t <= 0.0
    shell = (t > 0.0) & (t < 1.0)
    out[inner] = 1.0
    ts = t[shell]
    out[shell] = np.exp(1.0 - 1.0 / (1.0 - ts * ts))
    return out


BUMP_NOTE = ("mollifier bump exp(1 - 1/(1 - t^2)), t = clamp(2|y|/delta - 1),"
             " plateau B_{delta/2}, support B_delta")


def _periodic_delta(coords, center):
    """Componentwise periodic displacement from center, wrapped to [-1/2,1/2)."""
    d = coords - np.asarray(center)
    return d - np.round(d)


def remark_rhs_factory(delta, n=3):
    """Analytic right side g_d(y) - g_d(y - e1/4) of the bump potential."""
    center2 = np.zeros(n)
    center2[0] = 0.25

    def rhs(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r0 = np.linalg.norm(_periodic_delta(pts, np.zeros(n)), axis=1)
        r1 = np.linalg.norm(_periodic_delta(pts, center2), axis=1)
        return bump(r0, delta) - bump(r1, delta)

    return rhs


class RemarkField(GridScalarField):
    """The counterexample coefficient (2 + psi(y)) * I."""

    kind = "remark"

    def __init__(self, values, delta, rhs, psi):
        super().__init__(values, smoothness_note="(2+psi)*I, " + BUMP_NOTE)
        self.delta = float(delta)
        self.rhs = rhs            # analytic Laplacian of psi
        self.psi = psi            # nodal potential, min 0

    def to_spec(self):
        return {"kind": "remark", "delta": self.delta, "N": self.N}


def build_remark_coefficient(delta, N, n=3):
    """Construct the coefficient (2 + psi(y)) * I with min psi = 0.

    psi solves the periodic Poisson problem Laplacian(psi) = g_d(y) -
    g_d(y - e1/4) on an N-per-axis cell grid (spectral solve; the right side
    has zero mean up to quadrature, which is projected out).
    """
    if not 0.0 < delta < 0.125:
        raise FieldError(f"delta must lie in (0, 1/8), got {delta}")
    if N < 8:
        raise FieldError("remark field needs N >= 8")
    h = 1.0 / N
    axes = [-0.5 + h * np.arange(N)] * n
    rhs_fn = remark_rhs_factory(delta, n)

    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    r = rhs_fn(pts).reshape((N,) * n)
    r -= r.mean()  # quadrature residue of the exact cancellation

    # eigenvalues of the discrete periodic Laplacian, per axis
    k = np.arange(N)
    lam1d = (2.0 * np.cos(2.0 * np.pi * k / N) - 2.0) / h**2
    eig = np.zeros((N,) * n)
    for d in range(n):
        shape = [1] * n
        shape[d] = N
        eig = eig + lam1d.reshape(shape)
    rhat = np.fft.fftn(r)
    eig_flat = eig.ravel()
    rhat_flat = rhat.ravel()
    psi_hat = np.zeros_like(rhat_flat)
    nz = eig_flat != 0.0
    psi_hat[nz] = rhat_flat[nz] / eig_flat[nz]
    psi = np.real(np.fft.ifftn(psi_hat.reshape((N,) * n)))
    psi -= psi.min()
    return RemarkField(2.0 + psi, delta, rhs_fn, psi)


# ---------------------------------------------------------------------------
# audits

def audit_ellipticity(field, samples=200, seed=0):
    """Sampled ellipticity certificates (lam_hat, Lam_hat).

    Evaluates the quadratic form on random points in [-2, 2]^n and random
    unit directions plus the coordinate directions.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2.0, 2.0, size=(samples, field.n))
    mats = field.sample(pts)
    xi = rng.normal(size=(samples, field.n))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    q = np.einsum("mi,mij,mj->m", xi, mats, xi)
    lam_hat = float(q.min())
    Lam_hat = float(q.max())
    for d in range(field.n):
        e = np.zeros(field.n)
        e[d] = 1.0
        qd = np.einsum("i,mij,j->m", e, mats, e)
        lam_hat = min(lam_hat, float(qd.min()))
        Lam_hat = max(Lam_hat, float(qd.max()))
    return lam_hat, Lam_hat


def audit_periodicity(field, samples=100, seed=0):
    """Max deviation of a(y + k) - a(y) over random y and integer shifts."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, size=(samples, field.n))
    shifts = rng.integers(-2, 3, size=(samples, field.n)).astype(float)
    a0 = field.sample(pts)
    a1 = field.sample(pts + shifts)
    return float(np.max(np.abs(a1 - a0)))


# ---------------------------------------------------------------------------
# obstacles

class ObstacleFunction:
    """Obstacle phi on the unit box with certified boundary sign.

    ``eval`` accepts broadcastable coordinate arrays.  ``boundary_sign`` is
    True when a dense face sample found phi <= tol on the boundary.
    """

    def __init__(self, func, n=3, name="custom", params=None,
                 boundary_samples=24, tol=1e-10):
        self.func = func
        self.n = n
        self.name = name
        self.params = dict(params or {})
        self.boundary_sign = self._audit_boundary(boundary_samples, tol)

    def _audit_boundary(self, per_axis, tol):
        ax = np.linspace(0.0, 1.0, per_axis)
        worst = -np.inf
        for d in range(self.n):
            for val in (0.0, 1.0):
                axes = [ax] * self.n
                axes[d] = np.array([val])
                grids = np.meshgrid(*axes, indexing="ij")
                worst = max(worst, float(np.max(self.func(*grids))))
        return worst <= tol

    def eval_axes(self, axes):
        grids = []
        for d, a in enumerate(axes):
            shape = [1] * self.n
            shape[d] = len(a)
            grids.append(np.asarray(a, dtype=float).reshape(shape))
        return np.broadcast_to(self.func(*grids),
                               [len(a) for a in axes]).copy()

    def __call__(self, *coords):
        return self.func(*coords)

    def to_spec(self):
        return {"kind": self.name, "params": self.params}


def make_obstacle(kind, n=3, **params):
    """Named analytic obstacle families on the unit box.

    constant      phi = c (c <= 0 certifies the trivial chain)
    sine_bump     phi = c0 + c1 * prod_i sin(pi x_i)
    radial_bump   phi = height * (1 - |x - x0|^2 / r^2)_+^3
    """
    if kind == "constant":
        c = params.get("c", -1.0)
        return ObstacleFunction(lambda *xs: np.full(np.broadcast(*xs).shape, c)
                                if len(xs) > 1 else np.full_like(xs[0], c),
                                n=n, name="constant", params={"c": c})
    if kind == "sine_bump":
        c0 = params.get("c0", -0.5)
        c1 = params.get("c1", 1.5)

        def f(*xs):
            out = 1.0
            for x in xs:
                out = out * np.sin(np.pi * x)
            return c0 + c1 * out

        return ObstacleFunction(f, n=n, name="sine_bump",
                                params={"c0": c0, "c1": c1})
    if kind == "radial_bump":
        height = params.get("height", 1.0)
        radius = params.get("radius", 0.3)
        x0 = np.asarray(params.get("center", [0.5] * n), dtype=float)

        def f(*xs):
            s = 0.0
            for d, x in enumerate(xs):
                s = s + (x - x0[d]) ** 2
            return height * np.maximum(0.0, 1.0 - s / radius**2) ** 3

        return ObstacleFunction(f, n=n, name="radial_bump",
                                params={"height": height, "radius": radius,
                                        "center": x0.tolist()})
    raise FieldError(f"unknown obstacle family {kind!r}")


def field_from_spec(spec):
    """Rebuild a field from its JSON description (see ``to_spec``)."""
    kind = spec.get("kind")
    if kind == "constant":
        return make_constant_field(np.asarray(spec["matrix"], dtype=float))
    if kind == "separable":
        name = spec.get("name")
        params = spec.get("params", {})
        n = spec.get("n", 3)
        if name == "constant_scalar":
            c = float(params["c"])
            return make_separable_field(
                lambda *xs: c + 0.0 * sum(xs), n=n,
                name="constant_scalar", params=params)
        if name == "sinprod":
            c0 = float(params.get("c0", 2.0))
            c1 = float(params.get("c1", 0.5))

            def cf(*xs):
                out = 1.0
                for x in xs:
                    out = out * np.sin(2.0 * np.pi * x)
                return c0 + c1 * out

            return make_separable_field(cf, n=n, name="sinprod", params=params)
        raise FieldError(f"unknown separable family {name!r}")
    if kind == "remark":
        return build_remark_coefficient(spec["delta"], spec["N"],
                                        n=spec.get("n", 3))
    raise FieldError(f"unknown field kind {kind!r}")
