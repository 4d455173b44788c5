import numpy as np
import pytest

from hangstring.background import (forward_difference_weights, load_background, make_straight_background,
                                   make_swaying_background, write_background)
from hangstring.errors import InvalidGravity
from hangstring.mesh import derivative_values, make_mesh


def test_straight_background_residuals():
    m = make_mesh(64)
    g = np.array([0.0, -2.0])
    bg = make_straight_background(g, m)
    sl = bg.at(0.0)
    # (tau x')' + g = 0 and -tau'' + |x''|^2 tau - |xdot'|^2 = 0
    res = derivative_values(m, sl.tau[:, None] * sl.x1, 1) + g
    assert np.max(np.abs(res)) <= 1e-12
    assert np.max(np.abs(derivative_values(m, sl.tau1[:, None], 1))) <= 1e-12
    assert m.boundary_weights @ sl.tau[-3:] + g @ sl.x1[-1] == pytest.approx(0.0, abs=1e-12)
    assert sl.tau_face[0] == 0.0
    assert m.boundary_value_weights @ sl.x[-3:] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_zero_gravity_rejected():
    with pytest.raises(InvalidGravity):
        make_straight_background([0.0, 0.0], make_mesh(8))


def test_forward_difference_weights():
    h = 0.1
    t = np.arange(6) * h
    for j in range(4):
        w = forward_difference_weights(j, h)
        approx = w @ np.exp(t[: len(w)])
        assert approx == pytest.approx(1.0, abs=5 * h**2)


def test_background_round_trip(tmp_path):
    m = make_mesh(16)
    bg = make_swaying_background([0.0, -1.0], m, T=0.2, dt=0.05)
    write_background(tmp_path / "bg.csv", bg)
    back = load_background(tmp_path / "bg.csv", m, [0.0, -1.0])
    np.testing.assert_allclose(back.x, bg.x, rtol=0, atol=1e-15)
    np.testing.assert_allclose(back.tau, bg.tau, rtol=0, atol=1e-15)


def test_swaying_background_validation():
    m = make_mesh(64)
    bg = make_swaying_background([0.0, -1.0], m, T=1.0, dt=0.01)
    rep = bg.validate(10.0)
    assert rep["tension_bounds_ok"] and rep["x_at_one_ok"]
    assert rep["tau_at_zero"] == 0.0
    lo, hi = bg.tension_ratio_bounds()
    assert 0.1 <= lo <= hi <= 10
