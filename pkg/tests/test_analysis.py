import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geomews.analysis import (SweepRecord, hinge_fit_bic, linear_fit, padded_domain,
                              records_from_csv, records_to_csv, robustness_variations,
                              scaling_pipeline, validity_check)

from oracles import brute_hinge_bic, normal_equations


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
def test_linear_fit_matches_normal_equations(pts):
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.ptp(x) < 1e-3:
        return
    fit = linear_fit(x, y)
    slope, intercept = normal_equations(x, y)
    assert abs(fit.slope - slope) <= 1e-6 * (1 + abs(slope))
    assert abs(fit.intercept - intercept) <= 1e-6 * (1 + abs(intercept)) * (1 + np.abs(x).max())


def test_r_squared_centred():
    x = np.arange(10.0)
    assert linear_fit(x, 3 * x + 1).r_squared == 1.0
    fit = linear_fit(x, 2 * x, through_origin=True)
    assert fit.slope == 2.0 and fit.intercept == 0.0
    with pytest.raises(ValueError):
        linear_fit(np.ones(4), np.arange(4.0))


def test_hinge_exact_breakpoint():
    x = np.linspace(2.0, 2.44, 111)
    y = 1.0 + 0.5 * x + 4.0 * np.maximum(0, x - x[60])
    h = hinge_fit_bic(x, y)
    assert h.breakpoint == x[60]
    assert abs(h.left_slope - 0.5) < 1e-9 and abs(h.right_slope - 4.5) < 1e-9
    assert h.interval[0] <= h.breakpoint <= h.interval[1]


def test_hinge_bic_matches_brute_force(rng):
    x = np.linspace(0, 1, 40)
    y = np.where(x < 0.6, x, 0.6 + 3 * (x - 0.6)) + 0.05 * rng.standard_normal(40)
    h = hinge_fit_bic(x, y)
    cand, bic = brute_hinge_bic(x, y)
    np.testing.assert_allclose(h.candidates, cand)
    np.testing.assert_allclose(h.bic, bic, rtol=1e-9, atol=1e-9)
    within = cand[bic <= bic.min() + 2]
    assert h.interval == (within.min(), within.max())


def test_hinge_ignores_gaps_and_needs_points():
    x = np.linspace(0, 1, 12)
    y = np.abs(x - 0.5)
    y[3] = np.nan
    assert abs(hinge_fit_bic(x, y).breakpoint - 0.5) < 0.1
    with pytest.raises(ValueError):
        hinge_fit_bic(x[:5], y[:5])


def test_scaling_pipeline_synthetic_law():
    sigma = np.arange(0.005, 0.02501, 0.0025)
    K, D, c1 = 0.47, 1.8e-4, 3.0
    ews = K * sigma
    log_tau = c1 + D / sigma**2
    rep = scaling_pipeline(sigma, log_tau, ews)
    assert abs(rep.K - K) < 1e-12 and abs(rep.delta - D) < 1e-15
    assert abs(rep.c2_fit - D * K**2) < 1e-15 and rep.rel_err < 1e-9
    assert rep.r2_i == pytest.approx(1.0) and rep.r2_iii == pytest.approx(1.0)


def test_scaling_report_json(tmp_path):
    s = np.array([0.01, 0.02, 0.03])
    rep = scaling_pipeline(s, 1 / s**2, s)
    rep.to_json(tmp_path / "r.json", {"seed": 0})
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["header"]["seed"] == 0 and "c2_fit" in data["report"]


def test_validity_check():
    sigma = np.arange(0.005, 0.02501, 0.0025)
    ews = 0.4 * sigma * (1 + np.where(sigma > 0.0126, 2 * (sigma - 0.0125), 0) * 10)
    res = validity_check(sigma, ews)
    # prefix up to 0.0175 has ratios (1, 1, 1, 1, 1.05, 1.1): 1.1 / 1.025 - 1 > 5%
    assert res.sigma_max == pytest.approx(0.015)
    assert validity_check(sigma, 0.4 * sigma).sigma_max == pytest.approx(0.025)


def test_records_roundtrip(tmp_path):
    recs = [SweepRecord(2.1, 0.01, ews_geom=0.004, flags=""),
            SweepRecord(2.2, 0.01, flags="failed:x")]
    records_to_csv(tmp_path / "s.csv", recs, {"seed": 1})
    back = records_from_csv(tmp_path / "s.csv")
    assert back[0].ews_geom == 0.004 and back[1].flags == "failed:x"
    assert np.isnan(back[1].mdb)


def test_padded_domain():
    lo, hi = padded_domain(0.10)
    assert lo == pytest.approx((0.285, 0.0)) and hi == pytest.approx((0.615, 0.143))


def test_robustness_variations_complete():
    names = [v[0] for v in robustness_variations()]
    assert len(names) == 11
    assert "kappa 3.0" in names and "sigma_T = 2 sigma_u" in names
