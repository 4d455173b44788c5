import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hangstring.errors import InsufficientJet, InvalidGamma, UnsupportedOrder
from hangstring.mesh import GridFn, derivative, make_mesh
from hangstring.norms import (Jet, TimeSeries, apply_averaging, dagger_jet_norm, igamma, jet_norm, sstar_active,
                              sstar_upper, xnorm, ynorm)

from conftest import smooth_family


def test_xnorm_examples():
    m = make_mesh(512)
    zero = GridFn(m, np.zeros(512))
    assert all(xnorm(zero, k) == 0 for k in range(5))
    assert xnorm(m.sample(lambda s: 1 + 0 * s), 0) == pytest.approx(1.0)
    assert xnorm(m.sample(lambda s: s), 2) == pytest.approx(np.sqrt(4 / 3), abs=1e-3)
    with pytest.raises(UnsupportedOrder):
        xnorm(zero, 5)


def test_ynorm_examples():
    m = make_mesh(256)
    assert ynorm(GridFn(m, np.zeros(256)), 2) == 0
    assert ynorm(m.sample(lambda s: 1 + 0 * s), 0) == pytest.approx(np.sqrt(0.5), abs=1e-4)
    with pytest.raises(UnsupportedOrder):
        ynorm(m.sample(np.sin), 4)


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_x_y_identity(m):
    mesh = make_mesh(200, 1.5)
    for u in smooth_family(mesh, draws=5) + [mesh.centers**2]:
        g = GridFn(mesh, u)
        lhs = xnorm(g, m + 1) ** 2
        rhs = xnorm(g, 0) ** 2 + ynorm(derivative(g, 1), m) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12)


def test_jet_norms():
    m = make_mesh(512)
    s = m.sample(lambda s: s)
    one = m.sample(lambda s: 1 + 0 * s)
    zero = GridFn(m, np.zeros(512))
    assert jet_norm(Jet((zero, zero)), 1) == 0
    assert jet_norm(Jet((s, one)), 2, 0) == pytest.approx(xnorm(s, 2))
    assert jet_norm(Jet((s, one)), 2, 1) == pytest.approx(np.sqrt(4 / 3 + 1), abs=1e-3)
    with pytest.raises(InsufficientJet):
        jet_norm(Jet((s,)), 2, 1)
    assert dagger_jet_norm(Jet((zero, zero)), 1) == 0
    assert dagger_jet_norm(Jet((s,)), 0) == pytest.approx(ynorm(s, 0))
    # ||1||_{Y^1}^2 = ||1||^2 + ||s * 0||^2 = 1 and ||1||_{Y^0} = sqrt(1/2)
    assert dagger_jet_norm(Jet((one, one)), 1) == pytest.approx(1 + np.sqrt(0.5), abs=1e-3)
    with pytest.raises(InsufficientJet):
        dagger_jet_norm(Jet((one,)), 1)


@given(st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3), st.integers(0, 4))
@settings(max_examples=25)
def test_homogeneity(c, m):
    mesh = make_mesh(64)
    u = GridFn(mesh, smooth_family(mesh, draws=1)[0])
    assert xnorm(u * c, m) == pytest.approx(abs(c) * xnorm(u, m), rel=1e-12)
    if m <= 3:
        assert ynorm(u * c, m) == pytest.approx(abs(c) * ynorm(u, m), rel=1e-12)


def test_averaging_examples():
    m = make_mesh(256)
    np.testing.assert_allclose(apply_averaging(m.sample(lambda s: 1 + 0 * s)).scalar, 1.0, atol=1e-14)
    assert np.all(apply_averaging(GridFn(m, np.zeros(256))).values == 0)
    errs = [np.max(np.abs(apply_averaging(mm.sample(lambda s: s)).scalar - mm.centers / 2))
            for mm in (make_mesh(64), make_mesh(128))]
    assert errs[1] <= errs[0] / 3.5 or errs[1] < 1e-13


@pytest.mark.parametrize("m", [0, 1, 2])
def test_averaging_bound(m):
    mesh = make_mesh(512)
    for u in smooth_family(mesh, seed=3, draws=20):
        g = GridFn(mesh, u)
        assert xnorm(apply_averaging(g), m) <= 2 * xnorm(g, m) * 1.05


def test_averaging_identity():
    errs = []
    for n in (128, 256):
        mesh = make_mesh(n)
        w = mesh.sample(lambda s: np.cos(2 * s) + s**3)
        sw = GridFn(mesh, mesh.centers * (-2 * np.sin(2 * mesh.centers) + 3 * mesh.centers**2))
        errs.append(np.max(np.abs(apply_averaging(sw).scalar - (w.scalar - apply_averaging(w).scalar))))
    assert errs[1] <= errs[0] / 3.5


def test_igamma_closed_form():
    t = np.linspace(0, 2, 20001)
    f = TimeSeries(t, np.ones_like(t))
    for g in (0.5, 2.0):
        assert igamma(f, g) == pytest.approx(1 + np.sqrt((1 - np.exp(-4 * g)) / 2), abs=1e-6)
    # large gamma: the weight decays within ~1/gamma, so sample densely there
    t_fine = np.linspace(0, 0.2, 200001)
    assert igamma(TimeSeries(t_fine, np.ones_like(t_fine)), 200.0) == pytest.approx(1 + np.sqrt(0.5), abs=1e-6)
    assert igamma(TimeSeries(t, 0 * t), 1.0) == 0
    with pytest.raises(InvalidGamma):
        igamma(f, 0.0)


def test_sstar_closed_form():
    t = np.linspace(0, 1.5, 30001)
    f = TimeSeries(t, np.ones_like(t))
    g, T = 3.0, 1.5
    exact = min((1 - np.exp(-g * T)) / g, g**-0.5 * np.sqrt((1 - np.exp(-2 * g * T)) / (2 * g)))
    assert sstar_upper(f, g) == pytest.approx(exact, abs=1e-6)
    assert sstar_upper(TimeSeries(t, 0 * t), g) == 0
    with pytest.raises(InvalidGamma):
        sstar_upper(f, -1)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=40), st.floats(0.1, 50))
@settings(max_examples=50)
def test_sstar_below_igamma(vals, gamma):
    f = TimeSeries(np.linspace(0, 1, len(vals)), np.array(vals))
    assert sstar_upper(f, gamma) <= igamma(f, gamma) / gamma * (1 + 1e-12) + 1e-15


def test_sstar_active_bound():
    t = np.linspace(0, 1, 4001)
    spike = np.exp(-(((t - 0.3) / 0.002) ** 2)) * 100
    assert sstar_active(TimeSeries(t, spike), 1.0) == "L1_gamma"


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries(np.array([0.0, 0.0]), np.zeros(2))
    with pytest.raises(ValueError):
        TimeSeries(np.array([0.1, 0.2]), np.zeros(2))
