import numpy as np
import pytest

from hangstring import bessel


def test_first_zero():
    assert bessel.J01 == pytest.approx(2.404825557695773, abs=1e-12)
    assert abs(bessel.j0_series(bessel.J01)) < 1e-14
    assert bessel.OMEGA1 == pytest.approx(1.202413, abs=1e-6)


def test_mode_is_eigenfunction():
    # (s u')' = -omega^2 u is verified before the mode is trusted as an oracle
    assert bessel.mode_residual() < 1e-8


def test_mode_values():
    s = np.array([0.0, 1.0])
    np.testing.assert_allclose(bessel.chain_mode(s), [1.0, 0.0], atol=1e-14)
    h = 1e-6
    fd = (bessel.chain_mode(0.5 + h) - bessel.chain_mode(0.5 - h)) / (2 * h)
    assert bessel.chain_mode_slope(0.5) == pytest.approx(fd, rel=1e-7)
