"""The hanging string linearised around a background (x, tau).

    y_tt = (tau y')' + (nu x')' + f,   y(1, t) = 0,
    -nu'' + |x''|^2 nu = 2 xdot'.ydot' - 2 (x''.y'') tau + h,  nu(0) = 0,  nu'(1) = -g.y'(1).

With nu = nu_p + nu_l and nu_p = -((g + 2 tau x'')(1) . y'(1)) phi, the y
equation becomes the degenerate system with A = tau Id and
Q = -(phi x')' (x) (g + 2 tau x'')(1), forced by f + (nu_l x')'.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundState
from .bvp import nul_values, phi_values, principal_coefficient
from .compat import initial_jet_string
from .errors import NonContraction, StepFailure
from .evolution import (
    Coefficients,
    MidpointStepper,
    Trajectory,
    _check_initial,
    solve_ibvp,
    trajectory_jet_norm2,
    write_trajectory_csv,
)
from .mesh import GridFn, derivative_values
from .norms import TimeSeries, igamma

log = logging.getLogger(__name__)


def _phi_cache(bg: BackgroundState):
    cache = {}

    def phi(t):
        key = 0.0 if bg.static else float(t)
        if key not in cache:
            cache[key] = phi_values(bg.mesh, bg.at(key).curvature_sq)
        return cache[key]

    return phi


def build_linearized_coeffs(bg: BackgroundState, M0: float = 10.0, M1: float = 10.0) -> Coefficients:
    """A = tau Id (faces / centres) and the rank-one Q, with assumption checks in ``notes``."""
    mesh, dim = bg.mesh, bg.dim
    phi = _phi_cache(bg)

    def Q(t):
        sl = bg.at(0.0 if bg.static else t)
        dphix = derivative_values(mesh, phi(t)[:, None] * sl.x1, 1)
        w = principal_coefficient(mesh, sl, bg.g)
        return -dphix[:, :, None] * w[None, None, :]

    c = Coefficients(
        mesh, dim,
        A_face=lambda t: bg.at(0.0 if bg.static else t).tau_face,
        A_center=lambda t: bg.at(0.0 if bg.static else t).tau,
        Q=Q, f=None, static=bg.static, M0=M0, M1=M1, label=f"string:{bg.label}",
    )
    checks = bg.validate(M0)
    q0 = Q(0.0)
    sv = np.linalg.svd(q0, compute_uv=False)
    checks["Q_second_singular_value"] = float(sv[:, 1].max()) if dim > 1 else 0.0
    checks["assumptions_ok"] = bool(checks["tension_bounds_ok"] and checks["x_at_one_ok"])
    if not checks["assumptions_ok"]:
        log.warning("background violates the tension or end-point assumptions: %s", checks)
    c.notes["validation"] = checks
    return c


@dataclass(eq=False)
class StringTrajectory:
    traj: Trajectory
    nu: np.ndarray  # (K, n)
    nu_p: np.ndarray
    nu_l: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.traj.times

    def nu_gridfn(self, k: int) -> GridFn:
        return GridFn(self.traj.mesh, self.nu[k])

    def write_csv(self, path) -> None:
        write_trajectory_csv(path, self.traj, {"nu": self.nu, "nu_p": self.nu_p, "nu_l": self.nu_l})


def _field(fn, n, shape):
    if fn is None:
        return lambda t: np.zeros(shape)
    return lambda t: np.asarray(fn(t), dtype=float).reshape(shape)


def _nul(bg, t, y, v, h):
    return nul_values(bg.mesh, bg.at(0.0 if bg.static else t), y, v, h)


def _snapshot_nu(bg, c, traj: Trajectory, h):
    phi = _phi_cache(bg)
    K, n = len(traj), traj.mesh.n_cells
    nu_p = np.empty((K, n))
    nu_l = np.empty((K, n))
    for k, t in enumerate(traj.times):
        sl = bg.at(0.0 if bg.static else t)
        w = principal_coefficient(bg.mesh, sl, bg.g)
        nu_p[k] = -float(w @ traj.traces[k]) * phi(t)
        nu_l[k] = _nul(bg, t, traj.U[k], traj.V[k], h(t))
    return nu_p, nu_l


def _x1(bg, t):
    return bg.at(0.0 if bg.static else t).x1


def solve_linearized_direct(bg: BackgroundState, y0: GridFn, y1: GridFn, f=None, h=None, T: float = 1.0,
                            dt: float = 1e-2, every: int = 1, tol: float = 1e-10, max_inner: int = 50,
                            coeffs: Coefficients | None = None) -> StringTrajectory:
    """Coupled solve: each midpoint stage iterates nu_l(stage values) to a fixed point."""
    mesh, dim = bg.mesh, bg.dim
    n = mesh.n_cells
    c = coeffs or build_linearized_coeffs(bg)
    _check_initial(mesh, y0, y1)
    ff = _field(f, n, (n, dim))
    hh = _field(h, n, (n,))
    nsteps = int(round(T / dt))
    stepper = MidpointStepper(c, 0.0, dt)
    u = np.array(y0.values, dtype=float).reshape(n, dim)
    v = np.array(y1.values, dtype=float).reshape(n, dim)
    K = nsteps // every + 1
    U, V = np.empty((K, n, dim)), np.empty((K, n, dim))
    U[0], V[0] = u, v
    inner_counts = []
    for k in range(nsteps):
        tm = (k + 0.5) * dt
        x1 = _x1(bg, tm)
        nl = _nul(bg, tm, u, v, hh(tm))
        for it in range(1, max_inner + 1):
            extra = ff(tm) + derivative_values(mesh, nl[:, None] * x1, 1)
            u_new, v_new, ubar, vbar = stepper.step(u, v, k, extra)
            nl_new = _nul(bg, tm, ubar, vbar, hh(tm))
            change = float(np.max(np.abs(nl_new - nl)))
            nl = nl_new
            if change <= tol * (1.0 + float(np.max(np.abs(nl)))):
                break
        else:
            raise StepFailure("stage fixed point did not converge", tm,
                              {"iterations": max_inner, "last_change": change})
        inner_counts.append(it)
        u, v = u_new, v_new
        if (k + 1) % every == 0:
            U[(k + 1) // every], V[(k + 1) // every] = u, v
    traces = np.einsum("j,kjc->kc", mesh.boundary_weights, U[:, -3:, :])
    traj = Trajectory(mesh, dt, every, U, V, traces,
                      {"solver": "direct", "dt": dt, "T": nsteps * dt, "n": n, "background": bg.label})
    nu_p, nu_l = _snapshot_nu(bg, c, traj, hh)
    diag = {"max_inner_iterations": int(max(inner_counts, default=0)),
            "mean_inner_iterations": float(np.mean(inner_counts)) if inner_counts else 0.0}
    return StringTrajectory(traj, nu_p + nu_l, nu_p, nu_l, diag)


def _taylor_trajectory(mesh, jet, dt, nsteps) -> Trajectory:
    t = np.arange(nsteps + 1) * dt
    y0, y1, y2 = (jet[j].values for j in range(3))
    U = y0[None] + t[:, None, None] * y1[None] + 0.5 * t[:, None, None] ** 2 * y2[None]
    V = y1[None] + t[:, None, None] * y2[None]
    traces = np.einsum("j,kjc->kc", mesh.boundary_weights, U[:, -3:, :])
    return Trajectory(mesh, dt, 1, U, V, traces, {"solver": "taylor"})


def _igamma_norm2(traj: Trajectory, gamma: float) -> float:
    return igamma(TimeSeries(traj.times, trajectory_jet_norm2(traj)), gamma)


def solve_linearized_picard(bg: BackgroundState, y0: GridFn, y1: GridFn, f=None, h=None, T: float = 1.0,
                            dt: float = 1e-2, gamma: float = 20.0, max_iter: int = 30, tol: float = 1e-10,
                            coeffs: Coefficients | None = None) -> StringTrajectory:
    """Successive approximations y^(n) -> nu_l^(n) -> y^(n+1).

    y^(1) is the quadratic Taylor polynomial of the initial jet. nu_l^(n) is
    evaluated from the step midpoints of y^(n), so the fixed point is exactly
    the one of the direct solver. Stops when
    I_{gamma,T}(|||y^(n+1) - y^(n)|||_2) <= tol * I_{gamma,T}(|||y^(1)|||_2).
    """
    mesh, dim = bg.mesh, bg.dim
    n = mesh.n_cells
    c = coeffs or build_linearized_coeffs(bg)
    _check_initial(mesh, y0, y1)
    ff = _field(f, n, (n, dim))
    hh = _field(h, n, (n,))
    nsteps = int(round(T / dt))
    yjet, _ = initial_jet_string(y0, y1, f, h, bg, 2)
    current = _taylor_trajectory(mesh, yjet, dt, nsteps)
    scale = _igamma_norm2(current, gamma)
    if scale == 0.0:
        scale = 1.0
    diffs, ratios = [], []
    converged = False
    bad = 0
    for it in range(1, max_iter + 1):
        Um = 0.5 * (current.U[1:] + current.U[:-1])
        Vm = 0.5 * (current.V[1:] + current.V[:-1])

        def forcing(k, Um=Um, Vm=Vm):
            tm = (k + 0.5) * dt
            nl = _nul(bg, tm, Um[k], Vm[k], hh(tm))
            return ff(tm) + derivative_values(mesh, nl[:, None] * _x1(bg, tm), 1)

        nxt = solve_ibvp(c, y0, y1, 0.0, nsteps * dt, dt, extra_forcing=forcing, check_data=False)
        delta = Trajectory(mesh, dt, 1, nxt.U - current.U, nxt.V - current.V, nxt.traces - current.traces)
        d = _igamma_norm2(delta, gamma)
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            r = diffs[-1] / diffs[-2]
            ratios.append(r)
            bad = bad + 1 if r >= 1.0 else 0
        current = nxt
        if d <= tol * scale:
            converged = True
            break
        if bad >= 3:
            worst = max(ratios[-3:])
            raise NonContraction(
                "Picard iterates are not contracting",
                {"gamma": gamma, "ratios": ratios, "differences": diffs,
                 "suggested_gamma": float(2.0 * gamma * max(worst, 1.0))},
            )
    nu_p, nu_l = _snapshot_nu(bg, c, current, hh)
    meaningful = [r for r, dprev in zip(ratios, diffs[:-1]) if dprev > 1e-13 * scale]
    diag = {
        "gamma": gamma, "iterations": len(diffs), "converged": converged,
        "differences": diffs, "ratios": ratios, "reference_norm": scale,
        "mean_ratio": _geometric_mean(meaningful),
    }
    current.meta.update({"solver": "picard", "gamma": gamma, "T": nsteps * dt, "n": n, "background": bg.label})
    return StringTrajectory(current, nu_p + nu_l, nu_p, nu_l, diag)


def _geometric_mean(ratios):
    """Geometric mean of the contraction ratios; 0 if any step contracted exactly, None if none were measured."""
    if not ratios:
        return None
    if min(ratios) == 0.0:
        return 0.0
    return float(np.exp(np.mean(np.log(ratios))))


def max_jet_difference(a: StringTrajectory, b: StringTrajectory) -> float:
    """max_t |||y_a - y_b|||_2."""
    ta, tb = a.traj, b.traj
    delta = Trajectory(ta.mesh, ta.dt, ta.every, ta.U - tb.U, ta.V - tb.V, ta.traces - tb.traces)
    return float(np.max(trajectory_jet_norm2(delta)))


def boundary_condition_defects(st: StringTrajectory, bg: BackgroundState) -> dict:
    """max over snapshots of |nu'(1) + g.y'(1)| and of the linearly extrapolated nu(0)."""
    m = st.traj.mesh
    slope = np.array([m.boundary_weights @ nu[-3:] for nu in st.nu])
    neumann = np.abs(slope + st.traj.traces @ bg.g)
    c = m.centers
    left = np.abs(st.nu[:, 0] - c[0] * (st.nu[:, 1] - st.nu[:, 0]) / (c[1] - c[0]))
    return {"neumann": float(neumann.max()), "dirichlet_extrapolated": float(left.max())}


__all__ = [
    "build_linearized_coeffs", "solve_linearized_direct", "solve_linearized_picard", "StringTrajectory",
    "max_jet_difference", "boundary_condition_defects",
]
