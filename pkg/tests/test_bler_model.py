import math

import numpy as np
import pytest

from sinr_oco.bler_model import (CqiMap, SigmoidLinkModel, bce_grad, bce_loss, bler, cqi_to_sinr,
                                 sinr_to_cqi)

MODEL = SigmoidLinkModel.linear()


def test_default_table():
    assert MODEL.n_mcs == 28
    c0, s0 = MODEL.params(0, 1000)
    c27, s27 = MODEL.params(27, 1000)
    assert c0 == pytest.approx(-6.0) and s0 == 1.0
    assert c27 == pytest.approx(-6.0 + 0.9 * 27) and s27 == 1.0


def test_cbs_law():
    c, s = MODEL.params(5, 100)
    assert c == pytest.approx(-6.0 + 4.5 - 0.5)
    assert s == pytest.approx(10 ** 0.1)
    assert MODEL.params(5, 10 ** 6)[1] == pytest.approx(10 ** -0.3)
    clipped = SigmoidLinkModel.linear(scale=1.9)
    assert clipped.params(5, 10)[1] == 2.0
    assert clipped.params(5, 10 ** 9)[1] == 0.5


def test_unknown_mcs():
    with pytest.raises(ValueError, match="unknown MCS"):
        MODEL.bler(0.0, 28, 1000)
    with pytest.raises(ValueError, match="unknown MCS"):
        MODEL.bler(0.0, -1, 1000)


def test_bler_midpoint_and_clip():
    c, _ = MODEL.params(10, 1000)
    assert bler(MODEL, c, 10, 1000) == pytest.approx(0.5)
    assert bler(MODEL, 1e6, 10, 1000) == 0.01
    assert bler(MODEL, -1e6, 10, 1000) == 0.99


def test_bler_ln9_point():
    c, s = MODEL.params(3, 1000)
    assert bler(MODEL, c + s * math.log(9.0), 3, 1000) == pytest.approx(0.1, abs=1e-12)


def test_bler_array_matches_scalar():
    g = np.linspace(-20, 40, 301)
    arr = MODEL.bler_array(g, 12, 500)
    assert np.allclose(arr, [MODEL.bler(x, 12, 500) for x in g], rtol=0, atol=1e-15)


def test_bler_monotone_in_gamma_and_mcs():
    g = np.linspace(-15, 30, 500)
    for u in (0, 13, 27):
        p = MODEL.bler_array(g, u, 1000)
        assert np.all(np.diff(p) <= 0)
        inside = (p[:-1] > 0.01) & (p[:-1] < 0.99) & (p[1:] > 0.01) & (p[1:] < 0.99)
        assert inside.any() and np.all(np.diff(p)[inside] < 0)
    for u in range(27):
        assert MODEL.bler(4.0, u + 1, 1000) >= MODEL.bler(4.0, u, 1000)


def test_bce_values():
    c, _ = MODEL.params(7, 1000)
    assert bce_loss(MODEL, -1e6, 7, 1000, 1) == pytest.approx(-math.log(0.99))
    assert bce_loss(MODEL, c, 7, 1000, 0) == pytest.approx(math.log(2.0))


def test_bce_grad_midpoint():
    c, _ = MODEL.params(7, 1000)
    assert bce_grad(MODEL, c, 7, 1000, 0) == pytest.approx(-0.5)
    assert bce_grad(MODEL, c, 7, 1000, 1) == pytest.approx(0.5)


def test_bce_convex_where_unclipped():
    c, s = MODEL.params(9, 1000)
    g = np.linspace(c - 4 * s, c + 4 * s, 401)
    for y in (0, 1):
        f = np.array([bce_loss(MODEL, x, 9, 1000, y) for x in g])
        assert np.all(f[:-2] - 2 * f[1:-1] + f[2:] >= -1e-9)


def test_model_validation():
    with pytest.raises(ValueError):
        SigmoidLinkModel(centers=(0.0, -1.0), scales=(1.0, 1.0))
    with pytest.raises(ValueError):
        SigmoidLinkModel(centers=(0.0, 1.0), scales=(1.0, 0.0))
    with pytest.raises(ValueError):
        SigmoidLinkModel(centers=(0.0, 1.0), scales=(1.0,))


def test_cqi_map_roundtrip_and_saturation():
    m = CqiMap.affine()
    assert cqi_to_sinr(m, 1) == -8.0
    assert cqi_to_sinr(m, 15) == pytest.approx(-8.0 + 1.8 * 14)
    assert all(sinr_to_cqi(m, cqi_to_sinr(m, k)) == k for k in range(1, 16))
    assert sinr_to_cqi(m, -100.0) == 1
    assert sinr_to_cqi(m, 100.0) == 15
    assert sinr_to_cqi(m, -8.0 + 1.8 * 3 + 0.5) == 4
    with pytest.raises(ValueError):
        cqi_to_sinr(m, 0)
    with pytest.raises(ValueError):
        cqi_to_sinr(m, 16)


def test_cqi_map_must_increase():
    with pytest.raises(ValueError):
        CqiMap(tuple([0.0] * 15))
    with pytest.raises(ValueError):
        CqiMap(tuple(range(14)))
