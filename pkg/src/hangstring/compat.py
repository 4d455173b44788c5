"""Initial time-derivatives from the equations and the compatibility conditions at s = 1."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from math import comb, factorial
from typing import Callable

import numpy as np

from .background import BackgroundState, forward_difference_weights
from .bvp import sturm_values
from .errors import UnsupportedOrder
from .evolution import Coefficients, _as_matrix_field, flux_operator
from .mesh import GridFn, Mesh, derivative_values
from .norms import Jet


@dataclass
class CompatReport:
    order_checked: int
    tolerance: float
    residuals: list = field(default_factory=list)
    passed: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def time_derivatives(fn: Callable[[float], np.ndarray] | None, jmax: int, dt: float, static: bool = False):
    """[fn(0), d_t fn(0), ..., d_t^jmax fn(0)] by one-sided second-order differences.

    Returns None for a missing field; higher derivatives of a static field are 0.
    """
    if fn is None:
        return None
    base = np.asarray(fn(0.0), dtype=float)
    out = [base]
    for j in range(1, jmax + 1):
        if static:
            out.append(np.zeros_like(base))
            continue
        w = forward_difference_weights(j, dt)
        out.append(sum(wk * np.asarray(fn(k * dt), dtype=float) for k, wk in enumerate(w)))
    return out


def _check_order(m):
    if not 2 <= m <= 4:
        raise UnsupportedOrder(f"initial jets are implemented for m in 2..4, got {m}")


def _d1(mesh, v):
    return derivative_values(mesh, v, 1)


def _centred_flux_div(mesh: Mesh, A_center, u):
    """(A u')' with the mesh's centred calculus; A scalar (n,) or matrix (n, N, N)."""
    du = _d1(mesh, u)
    A = np.asarray(A_center, dtype=float)
    flux = A[:, None] * du if A.ndim == 1 else np.einsum("iab,ib->ia", A, du)
    return _d1(mesh, flux)


def _trace(mesh: Mesh, u):
    return mesh.boundary_weights @ u[-3:]


def initial_jet_ls(u0: GridFn, u1: GridFn, c: Coefficients, m: int, dt_coeff: float = 1e-3,
                   scheme: str = "centred") -> Jet:
    """(u_0^in, ..., u_m^in) for u_tt = (A u')' + Q u'(1) + f.

    u_{j+2} = sum_k C(j,k) [((d_t^{j-k} A) u_k')' + (d_t^{j-k} Q) u_k'(1)] + d_t^j f.
    ``scheme="centred"`` uses the mesh calculus (second order at every centre);
    ``scheme="flux"`` uses the stepper's flux-form operator instead, which is
    what a discrete trajectory differentiates to at t = 0.
    """
    _check_order(m)
    if scheme not in ("centred", "flux"):
        raise ValueError("scheme must be 'centred' or 'flux'")
    mesh, N = c.mesh, c.ncomp
    n = mesh.n_cells
    J = m - 2
    A_series = time_derivatives(c.A_face if scheme == "flux" else c.A_center, J, dt_coeff, c.static)
    Q_series = time_derivatives(c.Q, J, dt_coeff, c.static)
    f_series = time_derivatives(c.f, J, dt_coeff, False)
    u = [np.asarray(u0.values, dtype=float).reshape(n, N), np.asarray(u1.values, dtype=float).reshape(n, N)]
    for j in range(J + 1):
        acc = np.zeros((n, N))
        for k in range(j + 1):
            b = comb(j, k)
            Ak = A_series[j - k]
            if scheme == "flux":
                acc += b * (flux_operator(mesh, Ak, N) @ u[k].reshape(-1)).reshape(n, N)
            else:
                acc += b * _centred_flux_div(mesh, Ak, u[k])
            if Q_series is not None:
                Qk = _as_matrix_field(Q_series[j - k], N)
                acc += b * np.einsum("iab,b->ia", Qk, _trace(mesh, u[k]))
        if f_series is not None:
            acc += f_series[j].reshape(n, N)
        u.append(acc)
    return Jet(tuple(GridFn(mesh, v) for v in u))


def check_compat(jet: Jet, upto: int, tol: float) -> CompatReport:
    """Residuals |u_j^in(1)| for j = 0..upto by quadratic extrapolation from the last three centres."""
    if jet.order < upto:
        raise ValueError(f"jet of order {jet.order} cannot be checked up to order {upto}")
    w = jet.mesh.boundary_value_weights
    res = [float(np.linalg.norm(w @ jet[j].values[-3:])) for j in range(upto + 1)]
    return CompatReport(order_checked=upto, tolerance=float(tol), residuals=res,
                        passed=bool(all(r <= tol for r in res)))


# -- string recurrences ------------------------------------------------------

def _field_series(fn, jmax, dt, shape):
    if fn is None:
        return [np.zeros(shape) for _ in range(jmax + 1)]
    return [np.asarray(a, dtype=float).reshape(shape) for a in time_derivatives(fn, jmax, dt)]


def _multinomial(*ks):
    out = factorial(sum(ks))
    for k in ks:
        out //= factorial(k)
    return out


def initial_jet_string(y0: GridFn, y1: GridFn, f, h, bg: BackgroundState, m: int,
                       dt_coeff: float = 1e-3) -> tuple[Jet, Jet]:
    """Initial jets (y_0..y_m) and (nu_0..nu_{m-2}) of the linearised string.

    Interleaves the tension problem at order j with the recurrence for y_{j+2}.
    ``f(t)`` returns (n, dim) and ``h(t)`` returns (n,); either may be None.
    Background time derivatives come from the sampled background.
    """
    _check_order(m)
    mesh = bg.mesh
    n, dim = mesh.n_cells, bg.dim
    J = m - 2
    d1 = lambda v: _d1(mesh, v)  # noqa: E731
    tdx1 = [bg.time_derivative("x1", j) for j in range(J + 2)]
    tdx2 = [bg.time_derivative("x2", j) for j in range(J + 1)]
    tdtau = [bg.time_derivative("tau", j) for j in range(J + 1)]
    fs = _field_series(f, J, dt_coeff, (n, dim))
    hs = _field_series(h, J, dt_coeff, (n,))
    c0 = np.sum(tdx2[0] ** 2, axis=1)
    g = bg.g
    y = [np.asarray(y0.values, dtype=float).reshape(n, dim), np.asarray(y1.values, dtype=float).reshape(n, dim)]
    dy = {}

    def yprime(k, order):
        key = (k, order)
        if key not in dy:
            v = y[k]
            for _ in range(order):
                v = d1(v)
            dy[key] = v
        return dy[key]

    nu = []
    for j in range(J + 1):
        src = hs[j].copy()
        for j1 in range(j + 1):
            src += 2 * comb(j, j1) * np.sum(tdx1[j1 + 1] * yprime(j - j1 + 1, 1), axis=1)
        for j0 in range(j + 1):
            for j1 in range(j - j0 + 1):
                j2 = j - j0 - j1
                coef = _multinomial(j0, j1, j2)
                src -= 2 * coef * tdtau[j0] * np.sum(tdx2[j1] * yprime(j2, 2), axis=1)
                if j0 <= j - 1:
                    src -= coef * nu[j0] * np.sum(tdx2[j1] * tdx2[j2], axis=1)
        a = -float(g @ _trace(mesh, y[j]))
        nu.append(sturm_values(mesh, c0, src, a))
        acc = fs[j].copy()
        for j0 in range(j + 1):
            j1 = j - j0
            b = comb(j, j0)
            acc += b * d1(tdtau[j0][:, None] * yprime(j1, 1) + nu[j0][:, None] * tdx1[j1])
        y.append(acc)
    yj = Jet(tuple(GridFn(mesh, v) for v in y))
    nj = Jet(tuple(GridFn(mesh, v) for v in nu))
    return yj, nj
