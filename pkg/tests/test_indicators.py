import numpy as np
import pytest
from hypothesis import given, strategies as st

from geomews.model import ModelParams, schlogl_system
from geomews.pde import EllipseRegion
from geomews.indicators import (Protocol, classic_ews, classic_ews_scan, lag1_autocorrelation,
                                normalize_scores, variance)


def test_white_noise_ac1(rng):
    x = rng.standard_normal(20000)
    assert abs(lag1_autocorrelation(x)) < 3 / np.sqrt(x.size)


def test_ar1_ac1(rng):
    phi, n = 0.7, 50000
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = 0
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    assert abs(lag1_autocorrelation(x) - phi) < 0.01


def test_variance_is_unbiased():
    x = [1.0, 2.0, 4.0]
    assert variance(x) == np.var(x, ddof=1)


def test_constant_series_ac1_is_nan():
    assert np.isnan(lag1_autocorrelation(np.ones(10)))


def test_linearized_well_matches_ou_limit():
    """Near a stable root the path is an OU process with rate lam = -f'(x1)."""
    sigma, lam = 0.01, 0.18
    sys = schlogl_system(sigma=sigma)
    pt = classic_ews(sys, EllipseRegion((0.2,), (0.1,)),
                     Protocol(t_sim=2000, t_tr=100, n_ens=10, seed=4), x0=(0.2,))
    assert pt.n_valid == 10 and not pt.gap
    assert abs(pt.ac1 - np.exp(-lam)) < 0.02
    assert abs(pt.log10_var - np.log10(sigma**2 / (2 * lam))) < 0.05


def test_tiny_region_is_a_gap():
    sys = schlogl_system(sigma=0.05)
    pt = classic_ews(sys, EllipseRegion((0.2,), (1e-4,)), Protocol(t_sim=50, t_tr=10, n_ens=3),
                     x0=(0.2,))
    assert pt.gap and pt.n_valid == 0 and np.isnan(pt.log10_var)


def test_scan_and_csv(tmp_path):
    proto = Protocol(t_sim=200, t_tr=50, n_ens=4)
    res = classic_ews_scan(ModelParams(), [2.0, 2.1], [0.005], proto)
    b1, lv, ac, nv = res.series(0.005)
    assert b1.tolist() == [2.0, 2.1]
    assert np.all(nv <= 4)
    res.to_csv(tmp_path / "i.csv")
    assert (tmp_path / "i.csv").read_text().splitlines()[0] == "b1,sigma,log10var,ac1,n_valid,gap"


def test_protocol_validation():
    with pytest.raises(ValueError):
        Protocol(t_sim=100, t_tr=200)
    with pytest.raises(ValueError):
        Protocol(dt=0.3, dt_obs=1.0)
    assert Protocol().n_obs == 3000 and Protocol().every == 100


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50))
def test_normalize_range(xs):
    x = np.array(xs)
    if np.ptp(x) == 0:
        return
    y = normalize_scores(x)
    assert y.min() == 0 and y.max() == 1


def test_normalize_gaps_and_constant():
    y = normalize_scores([1.0, np.nan, 3.0])
    assert y[0] == 0 and np.isnan(y[1]) and y[2] == 1
    with pytest.warns(RuntimeWarning):
        assert normalize_scores([2.0, 2.0]).tolist() == [0.5, 0.5]
    with pytest.raises(ValueError):
        normalize_scores([1.0, np.nan])
