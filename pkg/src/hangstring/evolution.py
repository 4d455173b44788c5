"""Energy-stable time stepping for the degenerate wave system with a boundary-trace term.

    u_tt = (A u')' + Q u'(1, t) + eps s u_t' + f   on (0, 1),   u(1, t) = 0.

Space is discretised in flux form on the cell-centred mesh (zero flux through
s = 0, Dirichlet face at s = 1). Time uses the implicit midpoint rule on the
first-order system (u, v). The trace u'(1, t) is a linear functional of the
last three centre values, so Q u'(1) is a rank <= N update of the banded
midpoint matrix and is resolved with the Woodbury identity.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import StepFailure
from .mesh import GridFn, Mesh, boundary_value, derivative_values
from .norms import TimeSeries

log = logging.getLogger(__name__)


# -- coefficients ------------------------------------------------------------

@dataclass(eq=False)
class Coefficients:
    """A, Q, f of the degenerate system on one mesh.

    ``A_face(t)`` returns A at the faces, either (n+1,) for A = a(s,t) Id or
    (n+1, N, N); ``A_center(t)`` the same at centres (used only for checks).
    ``Q(t)`` returns (n, N, N) or None; ``f(t)`` returns (n, N) or None.
    """

    mesh: Mesh
    ncomp: int
    A_face: Callable[[float], np.ndarray]
    A_center: Callable[[float], np.ndarray]
    Q: Callable[[float], np.ndarray] | None = None
    f: Callable[[float], np.ndarray] | None = None
    static: bool = True
    M0: float = 10.0
    M1: float = 10.0
    label: str = ""
    notes: dict = field(default_factory=dict)

    def forcing(self, t: float) -> np.ndarray | None:
        return None if self.f is None else np.asarray(self.f(t), dtype=float).reshape(self.mesh.n_cells, self.ncomp)

    def validate(self, times=(0.0,)) -> dict:
        """Symmetry and two-sided bounds M0^-1 s <= A <= M0 s at the sampled times."""
        s = self.mesh.centers
        lo, hi, asym = np.inf, -np.inf, 0.0
        for t in times:
            A = _as_matrix_field(self.A_center(t), self.ncomp)
            asym = max(asym, float(np.max(np.abs(A - A.transpose(0, 2, 1)))))
            ev = np.linalg.eigvalsh(0.5 * (A + A.transpose(0, 2, 1))) / s[:, None]
            lo, hi = min(lo, float(ev.min())), max(hi, float(ev.max()))
        ok = asym <= 1e-12 and lo >= 1.0 / self.M0 and hi <= self.M0
        return {"symmetric_defect": asym, "eig_over_s_min": lo, "eig_over_s_max": hi, "passed": bool(ok)}


def _as_matrix_field(A, N):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        return A[:, None, None] * np.eye(N)[None]
    return A


def make_coefficients(mesh: Mesh, ncomp: int = 1, a=None, A=None, Q=None, f=None,
                      static=None, M0: float = 10.0, M1: float = 10.0, label: str = "") -> Coefficients:
    """Build Coefficients from plain callables.

    ``a(s, t)`` gives a scalar field (A = a Id); ``A(s, t)`` a matrix field
    returning (len(s), N, N). Both are evaluated at face coordinates for the
    fluxes. ``Q`` and ``f`` may be arrays (constant in time) or callables of t.
    Without anything, A = s Id.
    """
    if a is None and A is None:
        a = lambda s, t: s  # noqa: E731
    field_fn = a if a is not None else A
    faces, centers = mesh.faces, mesh.centers
    Qf = Q if (Q is None or callable(Q)) else (lambda t, _q=np.asarray(Q, dtype=float): _q)
    ff = f if (f is None or callable(f)) else (lambda t, _f=np.asarray(f, dtype=float): _f)
    if static is None:
        static = True
    return Coefficients(
        mesh, ncomp,
        A_face=lambda t: np.asarray(field_fn(faces, t), dtype=float),
        A_center=lambda t: np.asarray(field_fn(centers, t), dtype=float),
        Q=Qf, f=ff, static=bool(static), M0=M0, M1=M1, label=label,
    )


# -- discrete operators ------------------------------------------------------

def _face_distances(mesh: Mesh) -> np.ndarray:
    c = mesh.centers
    return np.concatenate([[c[0]], np.diff(c), [1.0 - c[-1]]])


@dataclass(frozen=True, eq=False)
class Operators:
    """Scalar (single-component) building blocks; vector versions use kron with I_N."""

    mesh: Mesh

    @cached_property
    def grad(self) -> sp.csr_matrix:
        """Face gradients (n+1) x n with u = 0 on the face s = 1 and no gradient at s = 0."""
        m = self.mesh
        n = m.n_cells
        d = _face_distances(m)
        rows, cols, vals = [], [], []
        for f in range(1, n):
            rows += [f, f]
            cols += [f - 1, f]
            vals += [-1.0 / d[f], 1.0 / d[f]]
        rows.append(n)
        cols.append(n - 1)
        vals.append(-1.0 / d[n])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))

    @cached_property
    def free_grad(self) -> sp.csr_matrix:
        """Face gradients where the face s = 1 uses the extrapolated trace, no Dirichlet value."""
        m = self.mesh
        g = self.grad.tolil()
        g[m.n_cells, :] = 0.0
        g[m.n_cells, m.n_cells - 3 :] = m.boundary_weights
        return g.tocsr()

    @cached_property
    def div(self) -> sp.csr_matrix:
        m = self.mesh
        n = m.n_cells
        inv = 1.0 / m.spacings
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        vals = np.stack([-inv, inv], axis=1).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))

    @cached_property
    def face_average(self) -> sp.csr_matrix:
        n = self.mesh.n_cells
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n + 1))

    @cached_property
    def s_dx(self) -> sp.csr_matrix:
        """Centred s u': average of s_face * face gradient over the two faces of each cell."""
        return (self.face_average @ sp.diags(self.mesh.faces) @ self.grad).tocsr()

    @cached_property
    def trace_weights(self) -> np.ndarray:
        w = np.zeros(self.mesh.n_cells)
        w[-3:] = self.mesh.boundary_weights
        return w


def _operators(mesh: Mesh) -> Operators:
    ops = mesh.__dict__.get("_hangstring_ops")
    if ops is None:
        ops = Operators(mesh)
        object.__setattr__(mesh, "_hangstring_ops", ops)
    return ops


def _block(A_face: np.ndarray, N: int) -> sp.spmatrix:
    A = np.asarray(A_face, dtype=float)
    if A.ndim == 1:
        return sp.kron(sp.diags(A), sp.identity(N), format="csr")
    nf = A.shape[0]
    return sp.bsr_matrix((A, np.arange(nf), np.arange(nf + 1)), shape=(nf * N, nf * N)).tocsr()


def flux_operator(mesh: Mesh, A_face: np.ndarray, N: int = 1, dirichlet: bool = True) -> sp.csr_matrix:
    """Sparse (A u')' in flux form; rows/cols ordered cell-major (i*N + c)."""
    ops = _operators(mesh)
    I = sp.identity(N, format="csr")
    G = ops.grad if dirichlet else ops.free_grad
    return (sp.kron(ops.div, I) @ _block(A_face, N) @ sp.kron(G, I)).tocsr()


def stiffness_matrix(mesh: Mesh, A_face: np.ndarray, N: int = 1) -> sp.csr_matrix:
    """S with u.S.u = sum over faces of A_face (du/ds) . (du/ds) * distance."""
    ops = _operators(mesh)
    I = sp.identity(N, format="csr")
    G = sp.kron(ops.grad, I)
    Wf = sp.kron(sp.diags(_face_distances(mesh)), I)
    return (G.T @ Wf @ _block(A_face, N) @ G).tocsr()


def apply_flux(mesh: Mesh, A_face, values, dirichlet: bool = True) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    N = 1 if v.ndim == 1 else v.shape[1]
    return (flux_operator(mesh, A_face, N, dirichlet) @ v.reshape(-1)).reshape(v.shape)


def apply_s_dx(mesh: Mesh, values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    flat = v.reshape(mesh.n_cells, -1)
    return (_operators(mesh).s_dx @ flat).reshape(v.shape)


# -- states and trajectories -------------------------------------------------

@dataclass(frozen=True)
class EvolState:
    t: float
    u: GridFn
    v: GridFn
    trace: np.ndarray


@dataclass(eq=False)
class Trajectory:
    """Snapshots at t = k * dt (stride ``every``) with the boundary-trace series."""

    mesh: Mesh
    dt: float
    every: int
    U: np.ndarray  # (K, n, N)
    V: np.ndarray
    traces: np.ndarray  # (K, N)
    meta: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.U)) * (self.dt * self.every)

    @property
    def ncomp(self) -> int:
        return self.U.shape[2]

    def __len__(self):
        return len(self.U)

    def state(self, k: int) -> EvolState:
        return EvolState(float(self.times[k]), GridFn(self.mesh, self.U[k]), GridFn(self.mesh, self.V[k]), self.traces[k].copy())

    @property
    def snapshots(self):
        return [self.state(k) for k in range(len(self))]

    def boundary_values(self) -> np.ndarray:
        """Extrapolated u(1, t) per snapshot (an O(h^3) consistency diagnostic)."""
        return np.tensordot(self.U[:, -3:, :], self.mesh.boundary_value_weights, axes=([1], [0]))

    def acceleration(self) -> np.ndarray:
        """d_t v at the snapshots by centred differences (one-sided at the ends)."""
        return np.gradient(self.V, self.dt * self.every, axis=0, edge_order=2)


def trace_series(traj: Trajectory) -> TimeSeries:
    """t -> u'(1, t) at the snapshot times."""
    vals = traj.traces[:, 0] if traj.ncomp == 1 else traj.traces
    return TimeSeries(traj.times, vals)


def zero_crossing_frequency(times, signal) -> float:
    """Angular frequency from linearly interpolated sign changes of a signal."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal, dtype=float)
    idx = np.nonzero(np.signbit(y[:-1]) != np.signbit(y[1:]))[0]
    if len(idx) < 2:
        raise ValueError("need at least two zero crossings to measure a frequency")
    tc = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    half_period = (tc[-1] - tc[0]) / (len(tc) - 1)
    return float(np.pi / half_period)


def spectral_peak(times, signal, pad: int = 16) -> float:
    """Angular frequency of the largest FFT peak (zero-padded, parabolic refinement)."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal, dtype=float) - np.mean(signal)
    dt = t[1] - t[0]
    nfft = pad * len(y)
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y)), nfft))
    k = int(np.argmax(spec[1:])) + 1
    if 1 <= k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1 : k + 2] + 1e-300)
        k = k + 0.5 * (a - c) / (a - 2 * b + c)
    return float(2 * np.pi * k / (nfft * dt))


def modal_amplitude(traj: Trajectory, shape: np.ndarray) -> np.ndarray:
    """Projection of every snapshot onto a fixed profile in the cell-weighted inner product."""
    w = traj.mesh.spacings
    prof = np.asarray(shape, dtype=float).reshape(traj.mesh.n_cells, -1)
    den = float(np.sum(w[:, None] * prof**2))
    return np.einsum("i,kic,ic->k", w, traj.U, prof) / den


# -- the stepper ---------------------------------------------------------------

class MidpointStepper:
    """Implicit midpoint steps for the semi-discrete system.

    One step solves (I - dt^2/4 K - dt/2 eps D) vbar = v + dt/2 (K u + f), where
    K = L + U V^T collects the flux operator and the trace coupling.
    """

    def __init__(self, coeffs: Coefficients, eps: float, dt: float):
        self.c = coeffs
        self.mesh = coeffs.mesh
        self.N = coeffs.ncomp
        self.eps = float(eps)
        self.dt = float(dt)
        ops = _operators(self.mesh)
        I = sp.identity(self.N, format="csr")
        self.D = sp.kron(ops.s_dx, I).tocsr()
        # trace functional per component: V^T u = (u'_c(1))_c
        nN = self.mesh.n_cells * self.N
        Vt = np.zeros((self.N, nN))
        for c in range(self.N):
            Vt[c, (self.mesh.n_cells - 3) * self.N + c :: self.N] = self.mesh.boundary_weights
        self.Vt = Vt
        self._cache_t = None
        self._cache = None

    def _system(self, t_mid: float):
        if self._cache is not None and (self.c.static or self._cache_t == t_mid):
            return self._cache
        dt, N, n = self.dt, self.N, self.mesh.n_cells
        L = flux_operator(self.mesh, self.c.A_face(t_mid), N)
        B = sp.identity(n * N, format="csc") - (dt * dt / 4) * L - (dt / 2) * self.eps * self.D
        try:
            lu = spla.splu(B.tocsc())
        except RuntimeError as exc:
            raise StepFailure(f"factorisation failed: {exc}", t_mid) from exc
        Ur = Vr = Y = small = None
        if self.c.Q is not None:
            Q = _as_matrix_field(self.c.Q(t_mid), N)
            Ufull = Q.reshape(n * N, N)  # column c multiplies u'_c(1)
            P, sv, Rt = np.linalg.svd(Ufull, full_matrices=False)
            keep = sv > 1e-14 * max(sv.max(initial=0.0), 1e-300)
            if np.any(keep):
                Ur = P[:, keep] * sv[keep]
                Vr = Rt[keep] @ self.Vt  # (r, nN)
                Y = lu.solve((dt * dt / 4) * Ur)
                small = np.eye(Ur.shape[1]) - Vr @ Y
        self._cache = (L, lu, Ur, Vr, Y, small)
        self._cache_t = t_mid
        return self._cache

    def step(self, u: np.ndarray, v: np.ndarray, k: int, extra=None):
        """Advance (u, v) from t_k to t_{k+1}; returns (u1, v1, ubar, vbar)."""
        dt = self.dt
        t_mid = (k + 0.5) * dt
        L, lu, Ur, Vr, Y, small = self._system(t_mid)
        uf, vf = u.reshape(-1), v.reshape(-1)
        Ku = L @ uf
        if Ur is not None:
            Ku = Ku + Ur @ (Vr @ uf)
        rhs = vf + (dt / 2) * Ku
        f = self.c.forcing(t_mid)
        if f is not None:
            rhs += (dt / 2) * f.reshape(-1)
        if extra is not None:
            rhs += (dt / 2) * np.asarray(extra, dtype=float).reshape(-1)
        z = lu.solve(rhs)
        if Ur is not None:
            try:
                z = z + Y @ np.linalg.solve(small, Vr @ z)
            except np.linalg.LinAlgError as exc:
                raise StepFailure("low-rank correction is singular", t_mid) from exc
        if not np.all(np.isfinite(z)):
            raise StepFailure("non-finite stage values", t_mid)
        vbar = z.reshape(u.shape)
        return u + dt * vbar, 2 * vbar - v, u + (dt / 2) * vbar, vbar


def _check_initial(mesh: Mesh, u0: GridFn, u1: GridFn, tol=None):
    for name, w in (("u0", u0), ("u1", u1)):
        bv = float(np.max(np.abs(boundary_value(w))))
        if tol is None:
            d3 = derivative_values(mesh, w.values, 3)[-3:]
            allowed = 1e-8 + 2.0 * mesh.spacings[-1] ** 3 * float(np.max(np.abs(d3)))
        else:
            allowed = tol
        if bv > allowed:
            raise ValueError(f"{name}(1) = {bv:.3e} violates the Dirichlet compatibility condition (tol {allowed:.1e})")


def solve_ibvp(c: Coefficients, u0: GridFn, u1: GridFn, eps: float, T: float, dt: float,
               every: int = 1, extra_forcing: Callable[[int], np.ndarray] | None = None,
               check_data: bool = True) -> Trajectory:
    """Integrate the (regularised) degenerate system from (u0, u1) up to time T.

    ``extra_forcing(k)`` adds a forcing evaluated at the midpoint of step k
    on top of ``c.f``. The scheme is unconditionally stable; dt > 0.5 only
    triggers an accuracy warning.
    """
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    if not (dt > 0 and T > 0 and dt <= T):
        raise ValueError("need 0 < dt <= T")
    if dt > 0.5:
        warnings.warn(f"dt = {dt} is large; the scheme is stable but inaccurate", RuntimeWarning, stacklevel=2)
    if check_data:
        _check_initial(c.mesh, u0, u1)
    nsteps = int(round(T / dt))
    stepper = MidpointStepper(c, eps, dt)
    N, n = c.ncomp, c.mesh.n_cells
    u = np.array(u0.values, dtype=float).reshape(n, N)
    v = np.array(u1.values, dtype=float).reshape(n, N)
    K = nsteps // every + 1
    U = np.empty((K, n, N))
    V = np.empty((K, n, N))
    U[0], V[0] = u, v
    for k in range(nsteps):
        extra = None if extra_forcing is None else extra_forcing(k)
        u, v, _, _ = stepper.step(u, v, k, extra)
        if (k + 1) % every == 0:
            U[(k + 1) // every], V[(k + 1) // every] = u, v
    traces = np.einsum("j,kjc->kc", c.mesh.boundary_weights, U[:, -3:, :])
    meta = {"eps": eps, "dt": dt, "T": nsteps * dt, "n": n, "grading": c.mesh.grading_exponent,
            "ncomp": N, "coefficients": c.label, "scheme": "implicit-midpoint"}
    return Trajectory(c.mesh, dt, every, U, V, traces, meta)


# -- epsilon study -----------------------------------------------------------

def trajectory_jet_norm2(traj: Trajectory) -> np.ndarray:
    """|||u(t)|||_2 along a trajectory (time derivatives from snapshots)."""
    from .norms import xnorm_sq_values

    acc = traj.acceleration()
    m = traj.mesh
    out = np.empty(len(traj))
    for k in range(len(traj)):
        out[k] = xnorm_sq_values(m, traj.U[k], 2) + xnorm_sq_values(m, traj.V[k], 1) + xnorm_sq_values(m, acc[k], 0)
    return np.sqrt(out)


def difference_norm2(a: Trajectory, b: Trajectory) -> np.ndarray:
    diff = Trajectory(a.mesh, a.dt, a.every, a.U - b.U, a.V - b.V, a.traces - b.traces)
    return trajectory_jet_norm2(diff)


def epsilon_sweep(c: Coefficients, u0: GridFn, u1: GridFn, eps_list, T: float, dt: float,
                  jobs: int = 1, every: int = 1) -> dict:
    """Solve for each eps and compare every run with the last (smallest eps) one.

    Data must already satisfy the compatibility conditions; no projection is
    attempted. Returns per-pair max_t |||u^eps - u^ref|||_2 and the fitted
    log-log slope in eps against the reference.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if any(e < 0 for e in eps_list):
        raise ValueError("eps values must be nonnegative")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        trajs = list(pool.map(lambda e: solve_ibvp(c, u0, u1, e, T, dt, every=every), eps_list))
    ref = trajs[-1]
    table = []
    for e, tr in zip(eps_list[:-1], trajs[:-1]):
        table.append({"eps": e, "ref_eps": eps_list[-1], "max_diff": float(np.max(difference_norm2(tr, ref)))})
    pairwise = [
        {"eps_a": a, "eps_b": b, "max_diff": float(np.max(difference_norm2(ta, tb)))}
        for a, b, ta, tb in zip(eps_list, eps_list[1:], trajs, trajs[1:])
    ]
    slope = None
    xs = np.array([r["eps"] - r["ref_eps"] for r in table])
    ys = np.array([r["max_diff"] for r in table])
    if len(table) >= 2 and np.all(ys > 0) and np.all(xs > 0):
        slope = float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
    return {"eps_list": eps_list, "table": table, "pairwise": pairwise, "slope": slope}


# -- CSV export --------------------------------------------------------------

def write_trajectory_csv(path, traj: Trajectory, extra_columns: dict | None = None) -> None:
    """Columns t, s, comp, u, v (plus scalar per-snapshot fields such as nu)."""
    extra_columns = extra_columns or {}
    s = traj.mesh.centers
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s", "comp", "u", "v"] + list(extra_columns))
        for k, t in enumerate(traj.times):
            for i in range(traj.mesh.n_cells):
                tail = [f"{float(extra_columns[name][k][i]):.17g}" for name in extra_columns]
                for comp in range(traj.ncomp):
                    w.writerow([f"{t:.17g}", f"{s[i]:.17g}", comp, f"{traj.U[k, i, comp]:.17g}",
                                f"{traj.V[k, i, comp]:.17g}"] + tail)


def write_trace_csv(path, traj: Trajectory) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "component", "uprime_at_1"])
        for k, t in enumerate(traj.times):
            for comp in range(traj.ncomp):
                w.writerow([f"{t:.17g}", comp, f"{traj.traces[k, comp]:.17g}"])
