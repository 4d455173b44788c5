"""Background string states (x, tau) around which the hanging string is linearised."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidGravity
from .mesh import Mesh, derivative_values


@dataclass(frozen=True)
class BackgroundSlice:
    """Background fields and their cached derivatives at one time."""

    t: float
    x: np.ndarray  # (n, dim)
    x1: np.ndarray  # x'
    x2: np.ndarray  # x''
    x3: np.ndarray  # x'''
    xdot: np.ndarray
    xdot1: np.ndarray  # xdot'
    tau: np.ndarray  # (n,)
    tau1: np.ndarray  # tau'
    tau_face: np.ndarray  # (n + 1,)

    @property
    def curvature_sq(self) -> np.ndarray:
        return np.sum(self.x2**2, axis=1)


@dataclass(frozen=True, eq=False)
class BackgroundState:
    """Sampled background (x, tau) on mesh x time grid, derivatives cached at load.

    ``x`` has shape (K, n, dim), ``tau`` shape (K, n); ``tau_face`` (K, n + 1)
    holds tau evaluated at face coordinates. A single time sample means a
    static background.
    """

    mesh: Mesh
    g: np.ndarray
    times: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    tau_face: np.ndarray
    label: str = "sampled"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if not np.linalg.norm(g) > 0:
            raise InvalidGravity("gravity vector must be nonzero")
        object.__setattr__(self, "g", g)
        if self.x.shape[:2] != (len(self.times), self.mesh.n_cells):
            raise ValueError("x samples do not match mesh x time grid")

    @property
    def dim(self) -> int:
        return self.x.shape[2]

    @property
    def static(self) -> bool:
        return len(self.times) == 1

    @cached_property
    def _derived(self):
        m = self.mesh
        K, n, d = self.x.shape
        xs = self.x.transpose(1, 0, 2)  # (n, K, d)
        x1 = derivative_values(m, xs, 1)
        x2 = derivative_values(m, x1, 1)
        x3 = derivative_values(m, x2, 1)
        tau1 = derivative_values(m, self.tau.T, 1)
        if self.static:
            xdot = np.zeros_like(xs)
        else:
            xdot = np.gradient(xs, self.times, axis=1, edge_order=2)
        xdot1 = derivative_values(m, xdot, 1)
        back = lambda a: np.ascontiguousarray(a.transpose(1, 0, 2))  # noqa: E731
        return dict(x1=back(x1), x2=back(x2), x3=back(x3), xdot=back(xdot), xdot1=back(xdot1), tau1=tau1.T.copy())

    def at(self, t: float) -> BackgroundSlice:
        """Fields at time t, linearly interpolated between samples."""
        key = float(t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        d = self._derived
        if self.static:
            k0, k1, w = 0, 0, 0.0
        else:
            k1 = int(np.clip(np.searchsorted(self.times, t), 1, len(self.times) - 1))
            k0 = k1 - 1
            w = (t - self.times[k0]) / (self.times[k1] - self.times[k0])

        def mix(a):
            return a[k0] if w == 0.0 else (1 - w) * a[k0] + w * a[k1]

        sl = BackgroundSlice(
            t=key, x=mix(self.x), x1=mix(d["x1"]), x2=mix(d["x2"]), x3=mix(d["x3"]),
            xdot=mix(d["xdot"]), xdot1=mix(d["xdot1"]), tau=mix(self.tau), tau1=mix(d["tau1"]),
            tau_face=mix(self.tau_face),
        )
        if len(self._cache) < 20000:
            self._cache[key] = sl
        return sl

    def time_derivative(self, name: str, j: int) -> np.ndarray:
        """d_t^j of a cached field at t = 0 (one-sided, second order)."""
        d = self._derived
        arr = {"x": self.x, "tau": self.tau, **d}[name]
        if j == 0:
            return arr[0]
        if self.static:
            return np.zeros_like(arr[0])
        dt = self.times[1] - self.times[0]
        w = forward_difference_weights(j, dt)
        if len(arr) < len(w):
            raise ValueError(f"need {len(w)} time samples for a {j}-th time derivative")
        return np.tensordot(w, arr[: len(w)], axes=1)

    def inextensibility_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self._derived["x1"], axis=2) - 1.0)))

    def tension_ratio_bounds(self) -> tuple[float, float]:
        r = self.tau / self.mesh.centers[None, :]
        return float(r.min()), float(r.max())

    def validate(self, M0: float, tol: float = 1e-10) -> dict:
        lo, hi = self.tension_ratio_bounds()
        x_end = float(np.max(np.abs(np.tensordot(self.mesh.boundary_value_weights, self.x[:, -3:], axes=([0], [1])))))
        return {
            "tau_over_s_min": lo,
            "tau_over_s_max": hi,
            "tension_bounds_ok": bool(lo >= 1.0 / M0 and hi <= M0),
            "tau_at_zero": float(np.max(np.abs(self.tau_face[:, 0]))),
            "x_at_one": x_end,
            "x_at_one_ok": bool(x_end <= max(tol, 10 * self.mesh.n_cells**-2)),
            "inextensibility_defect": self.inextensibility_defect(),
        }


def forward_difference_weights(j: int, h: float) -> np.ndarray:
    """Weights for d^j/dt^j at the first of j + 2 equispaced samples (second order)."""
    npts = j + 2
    k = np.arange(npts, dtype=float)
    V = np.vander(k, npts, increasing=True).T
    rhs = np.zeros(npts)
    rhs[j] = float(np.prod(np.arange(1, j + 1)))
    return np.linalg.solve(V, rhs) / h**j


def make_straight_background(g, mesh: Mesh, T: float = 0.0, dt: float = 1.0) -> BackgroundState:
    """Steady hanging state x = (1 - s) g/|g|, tau = |g| s.

    It is exactly stationary, so one time sample serves every t in [0, T].
    """
    g = np.asarray(g, dtype=float)
    gn = np.linalg.norm(g)
    if not gn > 0:
        raise InvalidGravity("gravity vector must be nonzero")
    s = mesh.centers
    e = g / gn
    x = ((1 - s)[:, None] * e[None, :])[None]
    tau = (gn * s)[None]
    tau_face = (gn * mesh.faces)[None]
    return BackgroundState(mesh, g, np.array([0.0]), x, tau, tau_face, label="straight")


def make_swaying_background(g, mesh: Mesh, T: float, dt: float, amplitude: float = 0.1,
                            omega: float = 1.0) -> BackgroundState:
    """Straight string plus a small transverse sway (1 - s)^2 sin(omega t).

    Not a solution of the nonlinear string equations; it is a smooth synthetic
    background with x'' != 0 and xdot' != 0 that satisfies x(1, t) = 0 and
    keeps tau = |g| s, used to exercise the curved-background code paths.
    """
    g = np.asarray(g, dtype=float)
    gn = np.linalg.norm(g)
    if not gn > 0:
        raise InvalidGravity("gravity vector must be nonzero")
    e = g / gn
    perp = np.zeros_like(e)
    perp[0 if abs(e[0]) < 0.9 else 1] = 1.0
    perp -= perp.dot(e) * e
    perp /= np.linalg.norm(perp)
    times = np.arange(int(round(T / dt)) + 3) * dt
    s = mesh.centers
    x = (1 - s)[None, :, None] * e[None, None, :] + amplitude * np.sin(omega * times)[:, None, None] * (
        (1 - s) ** 2
    )[None, :, None] * perp[None, None, :]
    tau = np.broadcast_to(gn * s, (len(times), mesh.n_cells)).copy()
    tau_face = np.broadcast_to(gn * mesh.faces, (len(times), mesh.n_cells + 1)).copy()
    return BackgroundState(mesh, g, times, x, tau, tau_face, label="swaying")


def load_background(path, mesh: Mesh, g) -> BackgroundState:
    """Read a CSV with header t, s, x0[, x1, x2], tau sampled on mesh centres.

    Rows may come in any order; each time must list every centre of ``mesh``.
    tau at the faces is interpolated from the centres with tau(0) = 0.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty background file")
    xcols = sorted((c for c in rows[0] if c.startswith("x")), key=lambda c: int(c[1:]))
    times = np.array(sorted({float(r["t"]) for r in rows}))
    n = mesh.n_cells
    x = np.zeros((len(times), n, len(xcols)))
    tau = np.zeros((len(times), n))
    seen = np.zeros((len(times), n), dtype=bool)
    tindex = {t: k for k, t in enumerate(times)}
    for r in rows:
        k = tindex[float(r["t"])]
        i = int(np.argmin(np.abs(mesh.centers - float(r["s"]))))
        if abs(mesh.centers[i] - float(r["s"])) > 1e-9:
            raise ValueError(f"{path}: s={r['s']} is not a centre of the configured mesh")
        x[k, i] = [float(r[c]) for c in xcols]
        tau[k, i] = float(r["tau"])
        seen[k, i] = True
    if not seen.all():
        raise ValueError(f"{path}: background must be sampled at every centre for every time")
    c = mesh.centers
    tau_face = np.zeros((len(times), n + 1))
    tau_face[:, 1:-1] = tau[:, :-1] + (tau[:, 1:] - tau[:, :-1]) * ((mesh.faces[1:-1] - c[:-1]) / np.diff(c))
    tau_face[:, -1] = tau[:, -3:] @ mesh.boundary_value_weights
    return BackgroundState(mesh, np.asarray(g, dtype=float), times, x, tau, tau_face, label=str(path))


def write_background(path, bg: BackgroundState) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s"] + [f"x{c}" for c in range(bg.dim)] + ["tau"])
        for k, t in enumerate(bg.times):
            for i, s in enumerate(bg.mesh.centers):
                w.writerow([repr(float(t)), repr(float(s))] + [repr(float(v)) for v in bg.x[k, i]] + [repr(float(bg.tau[k, i]))])
