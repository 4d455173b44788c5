"""Weighted Sobolev norms on (0, 1) and exponentially weighted time functionals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientJet, InvalidGamma, UnsupportedOrder
from .mesh import GridFn, Mesh, derivative_values, weighted_norm_values


@dataclass(frozen=True)
class Jet:
    """Stack (u, d_t u, ..., d_t^l u) of grid functions at one time."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("a jet needs at least one entry")
        mesh, ncomp = entries[0].mesh, entries[0].components
        for e in entries:
            if e.mesh is not mesh or e.components != ncomp:
                raise ValueError("jet entries must share one mesh and component count")
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return len(self.entries) - 1

    @property
    def mesh(self) -> Mesh:
        return self.entries[0].mesh

    def __getitem__(self, j) -> GridFn:
        return self.entries[j]


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or len(t) == 0 or len(v) != len(t):
            raise ValueError("times and values must be nonempty and of equal length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise ValueError("time series values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def magnitude(self) -> np.ndarray:
        v = self.values
        return np.abs(v) if v.ndim == 1 else np.linalg.norm(v.reshape(len(v), -1), axis=1)


# -- spatial norms ---------------------------------------------------------

def _sq(mesh, values, alpha=0.0):
    return weighted_norm_values(mesh, values, alpha, 2.0) ** 2


def _derivs(mesh, values, top):
    out = [np.asarray(values, dtype=float)]
    for _ in range(top):
        out.append(derivative_values(mesh, out[-1], 1))
    return out


def xnorm_sq_values(mesh: Mesh, values, m: int) -> float:
    if m < 0 or m > 4:
        raise UnsupportedOrder(f"X^m norm implemented for m in 0..4, got {m}")
    k, odd = divmod(m, 2)
    d = _derivs(mesh, values, m)
    total = sum(_sq(mesh, d[i]) for i in range(k + 1))
    if odd:
        total += sum(_sq(mesh, d[k + j], j - 0.5) for j in range(1, k + 2))
    else:
        total += sum(_sq(mesh, d[k + j], j) for j in range(1, k + 1))
    return total


def ynorm_sq_values(mesh: Mesh, values, m: int) -> float:
    if m < 0 or m > 3:
        raise UnsupportedOrder(f"Y^m norm implemented for m in 0..3, got {m}")
    if m == 0:
        return _sq(mesh, values, 0.5)
    d = _derivs(mesh, values, m)
    if m % 2:
        k = (m - 1) // 2
        return sum(_sq(mesh, d[i]) for i in range(k + 1)) + sum(
            _sq(mesh, d[k + j], j) for j in range(1, k + 2)
        )
    k = (m - 2) // 2
    return sum(_sq(mesh, d[i]) for i in range(k + 1)) + sum(
        _sq(mesh, d[k + j], j - 0.5) for j in range(1, k + 3)
    )


def xnorm(u: GridFn, m: int) -> float:
    """Norm of the weighted space X^m (top derivative order m)."""
    return float(np.sqrt(xnorm_sq_values(u.mesh, u.values, m)))


def ynorm(u: GridFn, m: int) -> float:
    """Norm of Y^m; built so that |u|_{X^{m+1}}^2 = |u|^2 + |u'|_{Y^m}^2 exactly."""
    return float(np.sqrt(ynorm_sq_values(u.mesh, u.values, m)))


def jet_norm(j: Jet, m: int, l: int | None = None) -> float:
    """sqrt(sum_{i<=l} |d_t^i u|_{X^{m-i}}^2); l defaults to m."""
    l = m if l is None else l
    if l > m:
        raise ValueError("need l <= m")
    if j.order < l:
        raise InsufficientJet(f"jet of order {j.order} cannot supply {l} time derivatives")
    if l < 0:
        return 0.0
    return float(np.sqrt(sum(xnorm(j[i], m - i) ** 2 for i in range(l + 1))))


def dagger_jet_norm(j: Jet, m: int) -> float:
    """sum_{i<=m} |d_t^i u|_{Y^{m-i}} (a plain sum, not root-sum-square)."""
    if m < 0:
        return 0.0
    if j.order < m:
        raise InsufficientJet(f"jet of order {j.order} cannot supply {m} time derivatives")
    return float(sum(ynorm(j[i], m - i) for i in range(m + 1)))


# -- averaging operator ----------------------------------------------------

def averaging_values(mesh: Mesh, values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    flat = v.reshape(mesh.n_cells, -1)
    h = mesh.spacings[:, None]
    full = np.cumsum(h * flat, axis=0) - h * flat  # sum over cells strictly left of i
    # midpoint rule on the half cell [face_i, s_i]; its midpoint value is
    # reconstructed linearly from the centre slope
    slope = derivative_values(mesh, flat, 1)
    half = 0.5 * h * (flat - 0.25 * h * slope)
    return ((full + half) / mesh.centers[:, None]).reshape(v.shape)


def apply_averaging(u: GridFn) -> GridFn:
    """(Mu)(s) = s^-1 * int_0^s u, evaluated at the cell centres."""
    return GridFn(u.mesh, averaging_values(u.mesh, u.values))


# -- time functionals ------------------------------------------------------

def _check_gamma(gamma):
    if not gamma > 0:
        raise InvalidGamma(f"gamma must be positive, got {gamma}")


def _trapz(y, t):
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def weighted_lp_time(f: TimeSeries, gamma: float, p: float) -> float:
    """|f|_{L^p_gamma(0,t)} by the trapezoid rule on the sample times."""
    _check_gamma(gamma)
    a = f.magnitude()
    w = np.exp(-gamma * f.times) * a
    return _trapz(w**p, f.times) ** (1.0 / p)


def igamma(f: TimeSeries, gamma: float) -> float:
    """sup_t' e^{-gamma t'} |f(t')| + sqrt(gamma) |f|_{L^2_gamma(0, t)}."""
    _check_gamma(gamma)
    a = f.magnitude()
    sup = float(np.max(np.exp(-gamma * f.times) * a))
    return sup + np.sqrt(gamma) * weighted_lp_time(f, gamma, 2.0)


def igamma_running(f: TimeSeries, gamma: float) -> np.ndarray:
    """I_{gamma,t}(f) for every sample time t at once."""
    _check_gamma(gamma)
    a = f.magnitude()
    e = np.exp(-gamma * f.times) * a
    sup = np.maximum.accumulate(e)
    integrand = e**2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(f.times))])
    return sup + np.sqrt(gamma) * np.sqrt(cum)


def sstar_bounds(f: TimeSeries, gamma: float) -> tuple[float, float]:
    """The two explicit upper bounds (L1 form, L2 form) for the dual functional S*."""
    l1 = weighted_lp_time(f, gamma, 1.0)
    l2 = weighted_lp_time(f, gamma, 2.0) / np.sqrt(gamma)
    return l1, l2


def sstar_upper(f: TimeSeries, gamma: float) -> float:
    """min(|f|_{L^1_gamma}, gamma^{-1/2} |f|_{L^2_gamma}).

    This is an upper bound for the dual norm of I_{gamma,t}, never the dual norm itself.
    """
    return min(sstar_bounds(f, gamma))


def sstar_active(f: TimeSeries, gamma: float) -> str:
    l1, l2 = sstar_bounds(f, gamma)
    return "L1_gamma" if l1 <= l2 else "L2_gamma"


def sstar_upper_running(f: TimeSeries, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    a = f.magnitude()
    e = np.exp(-gamma * f.times) * a
    dt = np.diff(f.times)

    def cum(y):
        return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * dt)])

    return np.minimum(cum(e), np.sqrt(cum(e**2)) / np.sqrt(gamma))


def as_series(times: Sequence[float], values) -> TimeSeries:
    return TimeSeries(np.asarray(times, dtype=float), np.asarray(values, dtype=float))
