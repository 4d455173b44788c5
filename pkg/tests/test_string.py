import csv

import numpy as np
import pytest

from hangstring import bessel
from hangstring.background import make_straight_background, make_swaying_background
from hangstring.errors import NonContraction
from hangstring.evolution import modal_amplitude, zero_crossing_frequency
from hangstring.mesh import GridFn, make_mesh
from hangstring.string_system import (boundary_condition_defects, build_linearized_coeffs, max_jet_difference,
                                      solve_linearized_direct, solve_linearized_picard)


def _transverse(m):
    mode = bessel.chain_mode(m.centers)
    return GridFn(m, np.stack([mode, 0 * mode], 1)), GridFn(m, np.zeros((m.n_cells, 2)))


def _mixed(m):
    s = m.centers
    mode = bessel.chain_mode(s)
    return GridFn(m, np.stack([mode, 0.3 * np.sin(np.pi * (1 - s))], 1)), GridFn(m, np.zeros((m.n_cells, 2)))


def test_coefficients_straight():
    m = make_mesh(64)
    g = np.array([0.6, -0.8]) * 2.0
    c = build_linearized_coeffs(make_straight_background(g, m))
    e = g / np.linalg.norm(g)
    np.testing.assert_allclose(c.Q(0.0), np.broadcast_to(np.linalg.norm(g) * np.outer(e, e), (64, 2, 2)), atol=1e-10)
    assert c.notes["validation"]["Q_second_singular_value"] <= 1e-12
    assert c.notes["validation"]["assumptions_ok"]
    unit = build_linearized_coeffs(make_straight_background([0.0, -1.0], m))
    np.testing.assert_allclose(unit.A_face(0.0), m.faces, atol=1e-15)


def test_q_rank_one_on_swaying_background():
    m = make_mesh(64)
    c = build_linearized_coeffs(make_swaying_background([0.0, -1.0], m, 1.0, 0.05))
    for t in (0.0, 0.37, 0.9):
        sv = np.linalg.svd(c.Q(t), compute_uv=False)
        assert sv[:, 1].max() <= 1e-12


def test_zero_data():
    m = make_mesh(32)
    bg = make_straight_background([0.0, -1.0], m)
    z = GridFn(m, np.zeros((32, 2)))
    d = solve_linearized_direct(bg, z, z, T=0.5, dt=0.05)
    assert np.all(d.traj.U == 0) and np.all(d.nu == 0)
    p = solve_linearized_picard(bg, z, z, T=0.5, dt=0.05)
    assert p.diagnostics["iterations"] == 1 and p.diagnostics["converged"]


def test_transverse_bessel_decouples():
    m = make_mesh(512)
    bg = make_straight_background([0.0, -1.0], m)
    y0, y1 = _transverse(m)
    st = solve_linearized_direct(bg, y0, y1, T=5.3, dt=1e-3, every=10)
    freq = zero_crossing_frequency(st.times, modal_amplitude(st.traj, y0.values))
    assert abs(freq - bessel.OMEGA1) / bessel.OMEGA1 <= 0.01
    assert np.max(np.abs(st.nu)) <= 1e-8
    assert np.max(np.abs(st.traj.U[:, :, 1])) <= 1e-8


def test_frequency_scales_with_gravity():
    m = make_mesh(128)
    bg = make_straight_background([0.0, -4.0], m)
    y0, y1 = _transverse(m)
    st = solve_linearized_direct(bg, y0, y1, T=3.0, dt=2e-3, every=5)
    freq = zero_crossing_frequency(st.times, modal_amplitude(st.traj, y0.values))
    assert abs(freq - 2 * bessel.OMEGA1) / (2 * bessel.OMEGA1) <= 0.01


def test_no_mixing_up_to_t10():
    m = make_mesh(64)
    bg = make_straight_background([0.0, -1.0], m)
    y0, y1 = _transverse(m)
    st = solve_linearized_direct(bg, y0, y1, T=10.0, dt=0.02, every=10)
    assert np.max(np.abs(st.traj.U[:, :, 1])) <= 1e-8


def test_split_consistency_and_boundary_conditions():
    m = make_mesh(64)
    bg = make_straight_background([0.0, -1.0], m)
    y0, y1 = _mixed(m)
    st = solve_linearized_direct(bg, y0, y1, T=1.0, dt=0.01)
    assert np.max(np.abs(st.nu - (st.nu_p + st.nu_l))) == 0.0
    d = boundary_condition_defects(st, bg)
    assert d["neumann"] <= 1e-10 and d["dirichlet_extrapolated"] <= 1e-10


@pytest.mark.parametrize("n", [32, 64])
def test_boundary_conditions_curved(n):
    m = make_mesh(n)
    bg = make_swaying_background([0.0, -1.0], m, 1.0, 0.01)
    y0, y1 = _transverse(m)
    st = solve_linearized_direct(bg, y0, y1, T=1.0, dt=0.01)
    d = boundary_condition_defects(st, bg)
    assert d["neumann"] <= 5.0 / n**2 and d["dirichlet_extrapolated"] <= 5.0 / n**2


def test_picard_matches_direct_straight():
    m = make_mesh(64)
    bg = make_straight_background([0.0, -1.0], m)
    y0, y1 = _mixed(m)
    d = solve_linearized_direct(bg, y0, y1, T=1.0, dt=0.01)
    p = solve_linearized_picard(bg, y0, y1, T=1.0, dt=0.01, gamma=20.0)
    assert p.diagnostics["converged"]
    assert max_jet_difference(p, d) <= 1e-6


def test_picard_matches_direct_swaying():
    m = make_mesh(48)
    bg = make_swaying_background([0.0, -1.0], m, 1.0, 0.01)
    y0, y1 = _mixed(m)
    d = solve_linearized_direct(bg, y0, y1, T=1.0, dt=0.01)
    p = solve_linearized_picard(bg, y0, y1, T=1.0, dt=0.01, gamma=10.0)
    assert p.diagnostics["converged"]
    assert 0 < p.diagnostics["mean_ratio"] < 1
    assert max_jet_difference(p, d) <= 1e-6


def test_picard_non_contraction_reported():
    m = make_mesh(32)
    bg = make_swaying_background([0.0, -1.0], m, T=8.0, dt=0.02, amplitude=1.0, omega=3.0)
    y0, y1 = _transverse(m)
    with pytest.raises(NonContraction) as info:
        solve_linearized_picard(bg, y0, y1, T=8.0, dt=0.02, gamma=0.001, max_iter=30)
    assert info.value.diagnostics["suggested_gamma"] > 0.001


def test_string_csv(tmp_path):
    m = make_mesh(8)
    bg = make_straight_background([0.0, -1.0], m)
    y0, y1 = _mixed(m)
    st = solve_linearized_direct(bg, y0, y1, T=0.1, dt=0.05)
    st.write_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["t", "s", "comp", "u", "v", "nu", "nu_p", "nu_l"]
    assert len(rows) == 1 + 3 * 8 * 2
