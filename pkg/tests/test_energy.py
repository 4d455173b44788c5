import json

import numpy as np
import pytest

from hangstring import bessel
from hangstring.background import make_swaying_background
from hangstring.energy import (calibrate_lambda, energy2, equivalence_constant, physical_energy,
                               verify_energy_estimate)
from hangstring.errors import CalibrationFailure, UnsupportedOrder
from hangstring.evolution import EvolState, make_coefficients, solve_ibvp
from hangstring.mesh import GridFn, make_mesh
from hangstring.string_system import build_linearized_coeffs, solve_linearized_direct


def _state(m, u, v=None, t=0.0):
    v = np.zeros(m.n_cells) if v is None else v
    return EvolState(t, GridFn(m, u), GridFn(m, v), np.zeros(1))


def _family(m, k=6):
    s = m.centers
    return [_state(m, np.cos((j + 0.5) * np.pi * s) + (1 - s) * j, np.sin(j * s) * (1 - s)) for j in range(k)]


def test_energy2_examples():
    m = make_mesh(256)
    c = make_coefficients(m)
    assert energy2(_state(m, np.zeros(256)), c, 3.0) == 0.0
    assert energy2(_state(m, 1 - m.centers), c, 0.0) == pytest.approx(1.0, abs=1e-3)
    st = _state(m, np.cos(m.centers) - np.cos(1), m.centers * (1 - m.centers))
    vals = [energy2(st, c, lam) for lam in (0.0, 1.0, 2.0, 10.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_physical_energy_of_mode():
    m = make_mesh(256)
    u0 = bessel.chain_mode_gridfn(m)
    c = make_coefficients(m)
    e = physical_energy(EvolState(0.0, u0, GridFn(m, np.zeros(256)), np.zeros(1)), c)
    ref = 0.5 * bessel.OMEGA1**2 * float(np.sum(m.spacings[:, None] * u0.values**2))
    assert e == pytest.approx(ref, rel=0.02)
    assert physical_energy(_state(m, np.zeros(256)), c) == 0.0


def test_calibration_trivial_family():
    m = make_mesh(32)
    assert calibrate_lambda(make_coefficients(m), [_state(m, np.zeros(32))]) == 1.0
    with pytest.raises(ValueError):
        calibrate_lambda(make_coefficients(m), [])


def test_calibration_monotone_in_family():
    m = make_mesh(64)
    q = np.full((64, 1, 1), -4.0)
    c = make_coefficients(m, Q=q)
    fam = _family(m)
    lam_small = calibrate_lambda(c, fam[:2])
    lam_rich = calibrate_lambda(c, fam)
    assert lam_rich >= lam_small


def test_adversarial_q_needs_larger_lambda():
    m = make_mesh(64)
    fam = _family(m)
    lam0 = calibrate_lambda(make_coefficients(m), fam)
    lamq = calibrate_lambda(make_coefficients(m, Q=np.full((64, 1, 1), -10.0)), fam)
    assert lamq > lam0


def test_calibration_failure_diagnostics():
    m = make_mesh(32)
    with pytest.raises(CalibrationFailure) as info:
        calibrate_lambda(make_coefficients(m), _family(m), cap=1e-3, max_doublings=4)
    assert len(info.value.diagnostics["history"]) == 4


def test_equivalence_on_trajectory():
    m = make_mesh(64)
    s = m.centers
    c = make_coefficients(m, Q=(-2 * np.cos(s))[:, None, None])
    tr = solve_ibvp(c, bessel.chain_mode_gridfn(m), GridFn(m, (1 - s) * np.sin(s)), 0.0, 2.0, 0.01, every=10)
    lam = calibrate_lambda(c, tr.snapshots)
    C0 = equivalence_constant(c, tr.snapshots, lam)
    assert C0 <= 100.0
    # the same constant covers every snapshot, including ones not used for calibration
    tr2 = solve_ibvp(c, bessel.chain_mode_gridfn(m), GridFn(m, (1 - s) * np.sin(s)), 0.0, 2.0, 0.01, every=7)
    assert equivalence_constant(c, tr2.snapshots, lam) <= 100.0


def test_dissipation_of_e2():
    m = make_mesh(128)
    c = make_coefficients(m)
    tr = solve_ibvp(c, bessel.chain_mode_gridfn(m), GridFn(m, np.zeros(128)), 0.1, 3.0, 0.01)
    e = np.array([energy2(st, c, 0.0) for st in tr.snapshots])
    assert np.all(np.diff(e) <= 1e-10 * e[0])


def _mode_traj(n=128, scale=1.0, f=None, eps=0.0, T=4.0):
    m = make_mesh(n)
    c = make_coefficients(m, f=f)
    u0 = bessel.chain_mode_gridfn(m) * scale
    return c, solve_ibvp(c, u0, GridFn(m, np.zeros(n)), eps, T, 0.01)


def test_verify_zero_data():
    m = make_mesh(32)
    c = make_coefficients(m)
    tr = solve_ibvp(c, GridFn(m, np.zeros(32)), GridFn(m, np.zeros(32)), 0.0, 1.0, 0.05)
    rep = verify_energy_estimate(tr, c, [1.0, 2.0])
    assert rep.passed and rep.constant_fit == 0.0
    assert np.all(rep.lhs == 0) and np.all(rep.rhs == 0)


def test_verify_bessel_mode():
    c, tr = _mode_traj()
    gammas = [1.0, 2.0, 4.0, 8.0, 16.0]
    rep = verify_energy_estimate(tr, c, gammas, cap=50.0)
    assert rep.passed and rep.bound_kind == "EE1"
    fits = [p["constant_fit"] for p in rep.per_gamma]
    # the fitted constant settles: the last two fits agree within 10%
    assert abs(fits[-1] - fits[-2]) <= 0.1 * fits[-1]
    assert rep.empirical_gamma1 in gammas
    d = json.loads(rep.to_json())
    assert {"bound_kind", "lambda", "gamma", "constant_fit", "empirical_gamma1", "passed", "active_bound"} <= set(d)


def test_verify_scale_invariance():
    def forcing(scale, m):
        shape = (1 - m.centers) * m.centers
        return lambda t: scale * shape * np.sin(2 * t)

    m = make_mesh(64)
    fits = []
    for scale in (1.0, 37.5):
        c, tr = _mode_traj(64, scale, f=forcing(scale, m))
        fits.append(verify_energy_estimate(tr, c, [2.0, 8.0]).constant_fit)
    assert fits[1] == pytest.approx(fits[0], rel=1e-10)


def test_verify_with_eps_adds_trace_term():
    c, tr = _mode_traj(64, eps=0.5)
    rep = verify_energy_estimate(tr, c, [2.0, 8.0], eps=0.5)
    assert rep.bound_kind == "BEE" and np.isfinite(rep.constant_fit)


def test_impulse_forcing_marks_l1_bound():
    m = make_mesh(64)
    s = m.centers
    shape = (1 - s) * np.cos(s)
    f = lambda t: shape * 50.0 * np.exp(-(((t - 0.5) / 0.02) ** 2))  # noqa: E731
    c = make_coefficients(m, f=f)
    tr = solve_ibvp(c, GridFn(m, np.zeros(64)), GridFn(m, np.zeros(64)), 0.0, 2.0, 0.002)
    rep = verify_energy_estimate(tr, c, [1.0, 4.0])
    assert rep.active_bound == "L1_gamma"


def test_m4_gate():
    c, tr = _mode_traj(32, T=0.5)
    with pytest.raises(UnsupportedOrder):
        verify_energy_estimate(tr, c, [1.0], m=4)
    rep = verify_energy_estimate(tr, c, [1.0], m=3)
    assert np.isfinite(rep.constant_fit)


def test_string_estimate():
    m = make_mesh(32)
    bg = make_swaying_background([0.0, -1.0], m, 1.0, 0.01)
    mode = bessel.chain_mode(m.centers)
    y0 = GridFn(m, np.stack([mode, 0 * mode], 1))
    st = solve_linearized_direct(bg, y0, GridFn(m, np.zeros((32, 2))), T=1.0, dt=0.01)
    rep = verify_energy_estimate(st.traj, build_linearized_coeffs(bg), [2.0, 8.0], string=(st, None))
    assert rep.bound_kind == "EstLP" and rep.passed
