"""Cell-centred discretisation of [0, 1] and discrete calculus on it.

The left face sits exactly at s = 0, where the coefficient of the degenerate
operator vanishes, so no boundary condition is ever imposed there. Every
quantity lives at cell centres; faces only carry fluxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidMesh, InvalidWeight, UnsupportedOrder

MAX_DERIVATIVE_ORDER = 4
# number of interior rows used to extrapolate derivative values to the end cells
_CLOSURE_POINTS = 5


@dataclass(frozen=True, eq=False)
class Mesh:
    n_cells: int
    faces: np.ndarray
    centers: np.ndarray
    spacings: np.ndarray
    grading_exponent: float = 1.0

    def __post_init__(self):
        f = self.faces
        if len(f) != self.n_cells + 1 or f[0] != 0.0 or f[-1] != 1.0:
            raise InvalidMesh("faces must run from 0 to 1 with n_cells + 1 entries")
        if np.any(np.diff(f) <= 0):
            raise InvalidMesh("faces must be strictly increasing")
        for arr in (self.faces, self.centers, self.spacings):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.n_cells

    @cached_property
    def d1(self) -> sp.csr_matrix:
        """Sparse first-derivative operator acting on centre values."""
        return _first_derivative_matrix(self.centers)

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """Weights w with w @ u ~ u'(1) (quadratic through the last three centres)."""
        return _lagrange_derivative_weights(self.centers[-3:], 1.0)

    @cached_property
    def boundary_value_weights(self) -> np.ndarray:
        """Weights w with w @ u ~ u(1) (quadratic extrapolation)."""
        return _lagrange_value_weights(self.centers[-3:], 1.0)

    def sample(self, func, components: int | None = None) -> "GridFn":
        """Evaluate ``func`` at the cell centres and wrap it as a GridFn."""
        vals = np.asarray(func(self.centers), dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.n_cells, float(vals))
        return GridFn(self, vals if components is None else vals.reshape(self.n_cells, components))


@dataclass(frozen=True, eq=False)
class GridFn:
    """Values of an R^N valued function at the centres of ``mesh``.

    ``values`` is stored as an (n_cells, N) array; scalar input is promoted.
    """

    mesh: Mesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.mesh.n_cells:
            raise InvalidMesh(f"values of shape {v.shape} do not match a mesh with {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[1]

    @property
    def scalar(self) -> np.ndarray:
        if self.components != 1:
            raise ValueError("grid function is vector valued")
        return self.values[:, 0]

    def pointwise_norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def with_values(self, values) -> "GridFn":
        return GridFn(self.mesh, values)

    def __add__(self, other):
        return GridFn(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return GridFn(self.mesh, self.values - _vals(other))

    def __mul__(self, c):
        return GridFn(self.mesh, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFn(self.mesh, -self.values)


def _vals(x):
    return x.values if isinstance(x, GridFn) else x


def make_mesh(n: int, grading: float = 1.0) -> Mesh:
    """Partition [0, 1] with faces (i/n)**grading.

    ``grading > 1`` clusters cells towards the degenerate end s = 0.
    """
    if int(n) != n or n < 4:
        raise InvalidMesh(f"need at least 4 cells, got {n}")
    if grading < 1:
        raise InvalidMesh(f"grading exponent must be >= 1, got {grading}")
    n = int(n)
    faces = (np.arange(n + 1) / n) ** grading
    faces[0], faces[-1] = 0.0, 1.0
    centers = 0.5 * (faces[:-1] + faces[1:])
    return Mesh(n, faces, centers, np.diff(faces), float(grading))


def _lagrange_derivative_weights(nodes, x):
    # derivative at x of the interpolating polynomial through nodes
    nodes = np.asarray(nodes, dtype=float)
    k = len(nodes)
    w = np.zeros(k)
    for j in range(k):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        total = 0.0
        for m in range(k - 1):
            rest = np.delete(others, m)
            total += np.prod(x - rest)
        w[j] = total / denom
    return w


def _lagrange_value_weights(nodes, x):
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones(len(nodes))
    for j in range(len(nodes)):
        for m in range(len(nodes)):
            if m != j:
                w[j] *= (x - nodes[m]) / (nodes[j] - nodes[m])
    return w


def _first_derivative_matrix(c: np.ndarray) -> sp.csr_matrix:
    n = len(c)
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1 : i + 2] = _lagrange_derivative_weights(c[i - 1 : i + 2], c[i])
    # End rows: extrapolate the interior centred values instead of using a
    # separate one-sided formula, so that D @ D keeps a smooth error profile.
    q = min(_CLOSURE_POINTS, n - 2)
    interior = D.tocsr()
    for row, idx in ((0, np.arange(1, q + 1)), (n - 1, np.arange(n - 2, n - 2 - q, -1))):
        w = _lagrange_value_weights(c[idx], c[row])
        combo = sp.csr_matrix(w) @ interior[idx]
        D[row] = combo.toarray()
    return D.tocsr()


def derivative_values(mesh: Mesh, values: np.ndarray, k: int = 1) -> np.ndarray:
    """k-th derivative of raw centre values; the leading axis is space."""
    if k < 1 or k > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrder(f"derivative order {k} not in 1..{MAX_DERIVATIVE_ORDER}")
    out = np.asarray(values, dtype=float)
    shape = out.shape
    out = out.reshape(shape[0], -1)
    for _ in range(k):
        out = mesh.d1 @ out
    return out.reshape(shape)


def derivative(u: GridFn, k: int = 1) -> GridFn:
    """k-th spatial derivative, built as k applications of the first-derivative stencil.

    Centred three-point differences inside; the two end rows extrapolate the
    neighbouring centred values, which makes them one-sided and at least
    second order. Composing the same operator keeps discrete identities such
    as d^k(u') == d^(k+1)u exact.
    """
    if k < 1 or k > MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrder(f"derivative order {k} not in 1..{MAX_DERIVATIVE_ORDER}")
    if u.mesh.n_cells < k + 2:
        raise InvalidMesh(f"order {k} needs at least {k + 2} cells")
    return GridFn(u.mesh, derivative_values(u.mesh, u.values, k))


def _reduce(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        return np.abs(v)
    return np.linalg.norm(v.reshape(v.shape[0], -1), axis=1)


def weighted_norm_values(mesh: Mesh, values, alpha: float = 0.0, p: float = 2.0) -> float:
    if alpha < 0:
        raise InvalidWeight(f"weight exponent must be nonnegative, got {alpha}")
    a = _reduce(values)
    s = mesh.centers
    if np.isinf(p):
        return float(np.max(s**alpha * a))
    if p < 1:
        raise InvalidWeight(f"p must lie in [1, inf], got {p}")
    return float(np.sum(mesh.spacings * (s**alpha * a) ** p) ** (1.0 / p))


def integrate_weighted(u: GridFn, alpha: float = 0.0, p: float = 2.0) -> float:
    """||s^alpha u||_{L^p} by the midpoint rule at cell centres.

    Vector valued ``u`` is reduced with the Euclidean norm in each cell.
    """
    return weighted_norm_values(u.mesh, u.values, alpha, p)


def boundary_deriv(u: GridFn) -> np.ndarray:
    """u'(1) from the quadratic through the last three centres, one entry per component."""
    if u.mesh.n_cells < 3:
        raise InvalidMesh("need at least 3 cells")
    return u.mesh.boundary_weights @ u.values[-3:]


def boundary_value(u: GridFn) -> np.ndarray:
    """u(1) by quadratic extrapolation from the last three centres."""
    return u.mesh.boundary_value_weights @ u.values[-3:]
