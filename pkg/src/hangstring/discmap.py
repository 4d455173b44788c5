"""Lifting u(s) to the unit disc as u(x1^2 + x2^2), checked through radial formulas.

With s = r^2 the disc measure 2 pi r dr becomes pi ds, so every disc integral
is a weighted integral on the source mesh:

    |v|_{L^2(D)}^2     = pi int u^2 ds
    |grad v|^2 term    = pi int 4 s u'^2 ds                  (v_r = 2 r u')
    Hessian term       = pi int (2u' + 4 s u'')^2 + 4 u'^2 ds  (v_rr, v_r / r)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedRatio, UnsupportedOrder
from .mesh import GridFn, Mesh, derivative_values
from .norms import xnorm


@dataclass(frozen=True, eq=False)
class RadialProfile:
    r_nodes: np.ndarray
    values: np.ndarray  # (n, N)
    mesh: Mesh

    def source(self) -> GridFn:
        """u(s) = v(sqrt s), exactly the original samples."""
        return GridFn(self.mesh, self.values)


def lift_to_disc(u: GridFn) -> RadialProfile:
    return RadialProfile(np.sqrt(u.mesh.centers), np.array(u.values, dtype=float), u.mesh)


def disc_seminorms_sq(v: RadialProfile) -> tuple[float, float, float]:
    """(L^2, gradient, Hessian) squared contributions."""
    mesh = v.mesh
    h = mesh.spacings[:, None]
    s = mesh.centers[:, None]
    u = v.values
    du = derivative_values(mesh, u, 1)
    d2u = derivative_values(mesh, du, 1)
    l2 = np.pi * float(np.sum(h * u**2))
    grad = np.pi * float(np.sum(h * 4 * s * du**2))
    hess = np.pi * float(np.sum(h * ((2 * du + 4 * s * d2u) ** 2 + 4 * du**2)))
    return l2, grad, hess


def disc_hm_norm(v: RadialProfile, m: int) -> float:
    """H^m(D) norm of the lifted profile, m in 0..2."""
    if m < 0 or m > 2:
        raise UnsupportedOrder(f"disc norms implemented for m in 0..2, got {m}")
    parts = disc_seminorms_sq(v) if m > 0 else (np.pi * float(np.sum(v.mesh.spacings[:, None] * v.values**2)),)
    return float(np.sqrt(sum(parts[: m + 1])))


def equivalence_ratio(u: GridFn, m: int) -> float:
    """|u#|_{H^m(D)} / |u|_{X^m}."""
    den = xnorm(u, m)
    if den == 0.0:
        raise UndefinedRatio("X^m norm vanishes; the ratio is undefined")
    return disc_hm_norm(lift_to_disc(u), m) / den
