import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wnmchar.failprob import (FailureCurve, build_curve, curves_svg, default_grid,
                              empirical_agreement, empirical_fraction_below, normal_cdf,
                              p_fail_high, p_fail_low, read_curves_csv, write_curves_csv)
from wnmchar.selfcheck import PHI_REFERENCE
from wnmchar.variation import StatSummary

VDD = 0.85


def _s(mu, sd):
    return StatSummary(100, mu, sd, mu - 3 * sd, mu + 3 * sd)


@pytest.mark.parametrize("x", sorted(PHI_REFERENCE))
def test_cdf_against_quadrature(x):
    assert abs(normal_cdf(x) - PHI_REFERENCE[x]) <= 1e-10


def test_cdf_quadrature_recomputed():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 30
    f = lambda t: mp.exp(-t * t / 2) / mp.sqrt(2 * mp.pi)  # noqa: E731
    for x in (-3.5, -0.7, 0.25, 4.1):
        assert abs(normal_cdf(x) - float(mp.quad(f, [-mp.inf, x]))) <= 1e-10


@given(st.floats(-40, 40))
def test_cdf_symmetry(x):
    assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) <= 1e-10


def test_cdf_nan():
    with pytest.raises(ValueError):
        normal_cdf(math.nan)


def test_p_fail_examples():
    assert p_fail_low(0.3, 0.02, 0.3) == 0.5
    assert p_fail_low(0.3, 0.02, 0.0) < 0.5
    assert p_fail_low(0.30, 0.02, 0.34) == pytest.approx(0.97725, abs=5e-6)
    assert p_fail_high(0.55, 0.02, 0.34, VDD) == pytest.approx(0.97725, abs=5e-6)
    assert p_fail_high(0.5, 0.02, VDD - 0.5, VDD) == 0.5
    assert p_fail_high(0.5, 0.02, 0.0, VDD) < 1e-40


def test_sigma_domain_and_step_flag():
    with pytest.raises(ValueError):
        p_fail_low(0.3, 0.0, 0.2)
    with pytest.raises(ValueError):
        p_fail_low(0.3, -0.1, 0.2)
    assert p_fail_low(0.3, 0.0, 0.2, allow_step=True) == 0.0
    assert p_fail_low(0.3, 0.0, 0.4, allow_step=True) == 1.0
    assert p_fail_high(0.5, 0.0, 0.4, VDD, allow_step=True) == 1.0
    with pytest.raises(ValueError):
        p_fail_low(0.3, 0.02, -0.01)
    with pytest.raises(ValueError):
        p_fail_high(0.5, 0.02, 0.9, VDD)


@given(st.floats(0.01, 0.8), st.floats(1e-3, 0.2), st.floats(0, 0.85), st.floats(0.1, 10))
def test_scale_equivariance(mu, sd, dv, k):
    assert p_fail_low(mu * k, sd * k, dv * k) == pytest.approx(p_fail_low(mu, sd, dv),
                                                               rel=1e-9, abs=1e-300)


def test_curve_grid_and_monotonicity():
    g = default_grid(VDD)
    assert len(g) == 851 and g[0] == 0.0 and g[-1] == pytest.approx(VDD)
    c = build_curve(_s(0.3, 0.02), _s(0.55, 0.03), VDD)
    assert np.all(np.diff(c.p_fail_low) >= 0) and np.all(np.diff(c.p_fail_high) >= 0)
    assert c.p_fail_low[0] == pytest.approx(normal_cdf(-0.3 / 0.02), rel=1e-12)
    assert c.p_fail_low[-1] == pytest.approx(1.0)
    at_mu = build_curve(_s(0.3, 0.02), _s(0.55, 0.03), VDD, grid=[0.3])
    assert at_mu.p_fail_low[0] == 0.5


def test_larger_sigma_smoother():
    narrow = build_curve(_s(0.3, 0.01), _s(0.55, 0.01), VDD, grid=np.linspace(0, 0.29, 30))
    wide = build_curve(_s(0.3, 0.03), _s(0.55, 0.03), VDD, grid=np.linspace(0, 0.29, 30))
    assert np.all(wide.p_fail_low > narrow.p_fail_low)


def test_curve_rejections():
    with pytest.raises(ValueError):
        build_curve(_s(0.3, 0.0), _s(0.55, 0.02), VDD)
    step = build_curve(_s(0.3, 0.0), _s(0.55, 0.02), VDD, allow_step=True)
    assert set(np.unique(step.p_fail_low)) == {0.0, 1.0}
    with pytest.raises(ValueError):
        build_curve(_s(0.3, 0.02), _s(0.55, 0.02), VDD, grid=[0.2, 0.1])
    with pytest.raises(ValueError):
        build_curve(_s(0.3, 0.02), _s(0.55, 0.02), VDD, grid=[0.1, 0.9])
    with pytest.raises(ValueError):
        FailureCurve(np.array([0, 1.0]), np.array([0.5, 0.4]), np.array([0.1, 0.2]))


def test_empirical_fraction_and_agreement():
    assert list(empirical_fraction_below([1, 2, 3, 4], [0, 2, 2.5, 10])) == [0, 0.25, 0.5, 1]
    x = np.random.default_rng(4).normal(0.3, 0.02, 1000)
    pts = empirical_agreement(x, [0.26, 0.28, 0.30, 0.32, 0.34])
    assert all(p.ok for p in pts)
    skew = np.random.default_rng(4).exponential(0.02, 1000) + 0.25
    assert not all(p.ok for p in empirical_agreement(skew, [0.252, 0.26, 0.27, 0.29, 0.31]))


def test_curves_csv_round_trip(tmp_path):
    curves = {("A", "CMOS16", 0.0, "zero"): build_curve(_s(0.3, 0.02), _s(0.55, 0.03), VDD),
              ("A", "CMOS16", 10.0, "zero"): build_curve(_s(0.28, 0.02), _s(0.56, 0.03), VDD)}
    p = tmp_path / "c.csv"
    write_curves_csv(p, curves)
    back = read_curves_csv(p)
    for k, c in curves.items():
        assert np.array_equal(back[k].delta_v, c.delta_v)
        assert np.array_equal(back[k].p_fail_low, c.p_fail_low)
        assert np.array_equal(back[k].p_fail_high, c.p_fail_high)


def test_svg_series_per_age_per_panel():
    curves = {}
    for kind in "ABC":
        for age in (0.0, 4.0, 10.0):
            curves[(kind, "CMOS16", age, "zero")] = build_curve(
                _s(0.3 - age / 1000, 0.02), _s(0.55, 0.03), VDD, grid=np.linspace(0, VDD, 50))
    svg = curves_svg(curves, "t")
    assert svg == curves_svg(curves, "t")
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    panels = [g for g in root.iter(f"{ns}g") if g.get("class") == "panel"]
    assert len(panels) == 3
    for p in panels:
        series = [g for g in p.iter(f"{ns}g") if g.get("class") == "series"]
        assert sorted(g.get("data-age") for g in series) == ["0", "10", "4"]
