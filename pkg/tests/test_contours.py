import numpy as np
import pytest

from workstats.contours import (
    LevelCurve, chi_grid, chi_level_function, level_root, level_set, level_set_derivative,
    scaling_conjecture_report,
)
from workstats.errors import LevelNotCrossed
from workstats.tfim import ModeSet

M10, M100 = ModeSet.from_sites(10), ModeSet.from_sites(100)
L0 = np.linspace(0.0, 2.0, 21)


def test_unit_level_sits_at_origin():
    g = chi_grid(M10, 100.0, L0, np.linspace(0, 20, 201), 0.1)
    np.testing.assert_allclose(g.values[0], 1.0, atol=1e-12)
    np.testing.assert_array_equal(level_set(g, 1.0).u, 0.0)
    f = chi_level_function(M10, 100.0, 0.1)
    np.testing.assert_array_equal(level_set(f, 1.0, L0, 20.0).u, 0.0)


def test_grid_is_even_in_u():
    us = np.linspace(-15, 15, 61)
    g = chi_grid(M100, 100.0, L0, us, 0.01)
    np.testing.assert_allclose(g.values, g.values[::-1], atol=1e-12)
    assert np.all(np.abs(g.values) <= 1.0 + 1e-12)
    assert g.units == {"u": "1/J", "lambda0": "dimensionless", "Re chi": "dimensionless"}


def test_grid_and_brent_roots_agree():
    g = chi_grid(M10, 100.0, L0, np.linspace(0, 20, 2001), 0.1)
    a = level_set(g, 0.5).u
    b = level_set(chi_level_function(M10, 100.0, 0.1), 0.5, L0, 20.0).u
    np.testing.assert_allclose(a, b, atol=1e-3)
    f = chi_level_function(M10, 100.0, 0.1)
    assert np.isfinite(b).sum() > len(L0) // 2
    for l0, u in zip(L0[np.isfinite(b)], b[np.isfinite(b)]):
        assert f(u, l0) == pytest.approx(0.5, abs=1e-10)


def test_uncrossed_levels_leave_gaps():
    g = chi_grid(M10, 100.0, L0, np.linspace(0, 2, 21), 0.1)
    curve = level_set(g, -0.9)
    assert curve.gaps.all()
    with pytest.raises(LevelNotCrossed):
        level_root(lambda u: 1.0 - 0.01 * u, 0.1, 5.0)
    d = level_set_derivative(curve).columns["du_c/dlambda0"]
    assert np.isnan(d).all()


def test_grid_rows_must_start_at_zero():
    g = chi_grid(M10, 1.0, L0, np.linspace(1, 2, 5), 0.1)
    with pytest.raises(ValueError):
        level_set(g, 0.5)


def test_derivative_of_straight_line():
    x = np.linspace(0, 1, 11)
    d = level_set_derivative(LevelCurve(x, 3.0 * x + 1.0, 0.5))
    np.testing.assert_allclose(d.columns["du_c/dlambda0"], 3.0, rtol=1e-12)
    assert d.units["du_c/dlambda0"] == "1/J"


def test_critical_feature_sharpens_with_size():
    l0 = np.linspace(0.5, 1.5, 51)
    rough = []
    for modes, dlam in ((M100, 0.01), (M10, 0.1)):
        curve = level_set(chi_level_function(modes, 100.0, dlam), 0.5, l0, 40.0)
        d = level_set_derivative(curve).columns["du_c/dlambda0"]
        window = (l0 > 0.85) & (l0 < 1.15)
        rough.append(np.max(np.abs(np.diff(d[window]))))
    assert rough[0] > 2.0 * rough[1]


def test_scaling_report_trivial_and_mismatched():
    us = np.linspace(0, 10, 11)
    r = scaling_conjecture_report(10, 0.1, 10, 0.1, 100.0, L0, us)
    assert r.sup_norm == 0.0
    assert "sup|dRe chi|=0.000000e+00" in r.summary()
    with pytest.raises(ValueError):
        scaling_conjecture_report(10, 0.1, 20, 0.1, 100.0, L0, us)


def test_scaling_report_intermediate_size():
    us = np.linspace(0, 20, 41)
    far = scaling_conjecture_report(100, 0.01, 10, 0.1, 100.0, L0, us).sup_norm
    mid = scaling_conjecture_report(20, 0.05, 10, 0.1, 100.0, L0, us).sup_norm
    assert 0.0 < mid and 0.0 < far
