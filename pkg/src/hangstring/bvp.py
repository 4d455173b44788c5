"""Two-point boundary value problems -nu'' + c nu = source with nu(0) = 0, nu'(1) = a.

All problems share one cell-centred finite-volume discretisation: the
Dirichlet value sits on the face s = 0 (half-cell distance to the first
centre) and the Neumann datum is the flux through the face s = 1. The matrix
is a symmetric-structured M-matrix whenever c >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .background import BackgroundState, BackgroundSlice
from .errors import SolverFailure
from .mesh import GridFn, Mesh, boundary_deriv, boundary_value, derivative_values
from .norms import Jet


@dataclass(frozen=True)
class SturmProblem:
    c: GridFn
    h: GridFn
    a: float
    h_II: GridFn | None = None

    def __post_init__(self):
        if np.any(self.c.values < 0):
            raise ValueError("potential c must be nonnegative")
        meshes = {id(self.c.mesh), id(self.h.mesh)} | ({id(self.h_II.mesh)} if self.h_II is not None else set())
        if len(meshes) != 1:
            raise ValueError("all fields of a SturmProblem must share one mesh")


def _face_distances(mesh: Mesh) -> np.ndarray:
    # distance between the centres on either side of each face; the outer
    # faces use the half cell to the boundary
    c = mesh.centers
    return np.concatenate([[c[0]], np.diff(c), [1.0 - c[-1]]])


def _banded(mesh: Mesh, c: np.ndarray) -> np.ndarray:
    h = mesh.spacings
    d = _face_distances(mesh)
    n = mesh.n_cells
    ab = np.zeros((3, n))
    lower = 1.0 / (h * d[:-1])  # coupling through the left face
    upper = 1.0 / (h * d[1:])
    diag = lower + c
    diag[:-1] += upper[:-1]  # the right face of the last cell is a Neumann flux
    ab[0, 1:] = -upper[:-1]
    ab[1] = diag
    ab[2, :-1] = -lower[1:]
    return ab


def _solve(mesh: Mesh, c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    ab = _banded(mesh, c)
    try:
        nu = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"tridiagonal solve failed: {exc}") from exc
    if not np.all(np.isfinite(nu)):
        raise SolverFailure("tridiagonal solve produced non-finite values")
    # residual check against the banded operator
    res = ab[1] * nu
    res[:-1] += ab[0, 1:] * nu[1:]
    res[1:] += ab[2, :-1] * nu[:-1]
    scale = max(np.max(np.abs(rhs)), np.max(np.abs(ab[1] * nu)), 1e-300)
    if np.max(np.abs(res - rhs)) > 1e-10 * scale:
        raise SolverFailure("tridiagonal residual check failed")
    return nu


def sturm_values(mesh: Mesh, c, h, a: float, h_II=None) -> np.ndarray:
    """Raw-array solver behind solve_sturm / solve_sturm_div."""
    c = np.broadcast_to(np.asarray(c, dtype=float).reshape(-1), (mesh.n_cells,))
    rhs = np.array(np.broadcast_to(np.asarray(h, dtype=float).reshape(-1), (mesh.n_cells,)), dtype=float)
    hs = mesh.spacings
    rhs[-1] += a / hs[-1]
    if h_II is not None:
        hII = np.asarray(h_II, dtype=float).reshape(-1)
        cc = mesh.centers
        # h_II at the interior faces by linear interpolation, at s = 0 by
        # linear extrapolation; the face s = 1 never needs it because the
        # Neumann datum a + h_II(1) cancels it exactly
        w = (mesh.faces[1:-1] - cc[:-1]) / np.diff(cc)
        H = np.empty(mesh.n_cells + 1)
        H[1:-1] = hII[:-1] + w * (hII[1:] - hII[:-1])
        H[0] = hII[0] - cc[0] * (hII[1] - hII[0]) / (cc[1] - cc[0])
        H[-1] = 0.0
        div = np.diff(H) / hs
        div[-1] = -H[-2] / hs[-1]
        rhs -= div
    return _solve(mesh, np.asarray(c), rhs)


def solve_sturm(p: SturmProblem) -> GridFn:
    """Solve -nu'' + c nu = h, nu(0) = 0, nu'(1) = a."""
    if p.h_II is not None:
        raise ValueError("problem carries a divergence-form source; use solve_sturm_div")
    return GridFn(p.c.mesh, sturm_values(p.c.mesh, p.c.scalar, p.h.scalar, p.a))


def solve_sturm_div(p: SturmProblem) -> GridFn:
    """Solve -nu'' + c nu = h - h_II', nu(0) = 0, nu'(1) = a + h_II(1)."""
    if p.h_II is None:
        raise ValueError("solve_sturm_div needs h_II")
    return GridFn(p.c.mesh, sturm_values(p.c.mesh, p.c.scalar, p.h.scalar, p.a, p.h_II.scalar))


def _slice(bg: BackgroundState, t) -> BackgroundSlice:
    if isinstance(t, BackgroundSlice):
        return t
    if isinstance(t, (int, np.integer)):
        return bg.at(float(bg.times[t]) if not bg.static else 0.0)
    return bg.at(float(t))


def phi_values(mesh: Mesh, curvature_sq: np.ndarray) -> np.ndarray:
    return sturm_values(mesh, curvature_sq, 0.0, 1.0)


def solve_phi(bg: BackgroundState, t=0) -> GridFn:
    """phi with -phi'' + |x''|^2 phi = 0, phi(0) = 0, phi'(1) = 1.

    ``t`` is a time index into the background samples, or a BackgroundSlice.
    """
    sl = _slice(bg, t)
    return GridFn(bg.mesh, phi_values(bg.mesh, sl.curvature_sq))


def _end(mesh, values):
    return mesh.boundary_value_weights @ np.asarray(values)[-3:]


def nul_data(mesh: Mesh, sl: BackgroundSlice, y: np.ndarray, ydot: np.ndarray, h=None):
    """Source and Neumann datum of the lower-order tension problem.

    y, ydot are (n, dim) centre values. Returns (source, a).
    """
    y1 = derivative_values(mesh, y, 1)
    y2 = derivative_values(mesh, y1, 1)
    ydot1 = derivative_values(mesh, ydot, 1)
    src = 2 * np.sum(sl.xdot1 * ydot1, axis=1) - 2 * np.sum(sl.x2 * y2, axis=1) * sl.tau
    if h is not None:
        src = src + np.asarray(h, dtype=float).reshape(-1)
    a = -2 * _end(mesh, sl.xdot1) @ _end(mesh, ydot) + 2 * (_end(mesh, sl.x2) @ (mesh.boundary_weights @ y[-3:])) * _end(mesh, sl.tau)
    return src, float(a)


def nul_values(mesh: Mesh, sl: BackgroundSlice, y, ydot, h=None) -> np.ndarray:
    src, a = nul_data(mesh, sl, y, ydot, h)
    return sturm_values(mesh, sl.curvature_sq, src, a)


def solve_nul(bg: BackgroundState, y: Jet, h: GridFn | None = None, t=0) -> GridFn:
    """Lower-order part nu_l of the tension perturbation at time index ``t``.

    Uses y = y[0] and ydot = y[1] from the jet.
    """
    if y.order < 1:
        raise ValueError("solve_nul needs a jet with y and its time derivative")
    sl = _slice(bg, t)
    hv = None if h is None else h.scalar
    return GridFn(bg.mesh, nul_values(bg.mesh, sl, y[0].values, y[1].values, hv))


def principal_coefficient(mesh: Mesh, sl: BackgroundSlice, g: np.ndarray) -> np.ndarray:
    """The vector (g + 2 tau x'')(1) that multiplies y'(1) in nu_p."""
    return g + 2 * _end(mesh, sl.tau) * _end(mesh, sl.x2)


def assemble_nu(bg: BackgroundState, phi: GridFn, y_boundary_slope, nul: GridFn, t=0) -> GridFn:
    """nu = nu_p + nu_l with nu_p = -((g + 2 tau x'')(1) . y'(1)) phi."""
    sl = _slice(bg, t)
    w = principal_coefficient(bg.mesh, sl, bg.g)
    coeff = -float(w @ np.asarray(y_boundary_slope, dtype=float))
    return GridFn(bg.mesh, coeff * phi.values + nul.values)


def principal_part(bg: BackgroundState, phi: GridFn, y_boundary_slope, t=0) -> GridFn:
    zero = GridFn(bg.mesh, np.zeros(bg.mesh.n_cells))
    return assemble_nu(bg, phi, y_boundary_slope, zero, t)


__all__ = [
    "SturmProblem", "solve_sturm", "solve_sturm_div", "solve_phi", "solve_nul", "assemble_nu",
    "sturm_values", "nul_values", "nul_data", "phi_values", "principal_coefficient", "principal_part",
    "boundary_deriv", "boundary_value",
]
