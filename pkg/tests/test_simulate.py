import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from geomews import model
from geomews.model import ModelParams, find_equilibria, phyto_system, schlogl_system
from geomews.pde import EllipseRegion
from geomews.simulate import (MfptEstimate, NoTransitionsError, SimConfig, histograms_to_csv,
                              kaplan_meier_mean, mc_mfpt, sample_in_ellipse, simulate_path,
                              stationary_histogram, substream)

from oracles import mfpt_1d_quadrature, product_limit_mean


@pytest.mark.parametrize("x0", [(0.38, 0.005), (0.42, 0.03), (0.55, 0.10)])
def test_noise_free_path_matches_ode(default_params, x0):
    p = default_params.with_noise(0.0, 1.0)
    sys = phyto_system(p)
    cfg = SimConfig(dt=1e-3, t_max=40.0)
    path = simulate_path(sys, x0, cfg, every=1000)
    sol = solve_ivp(lambda t, x: model.drift(x, p), (0, 40.0), x0, rtol=1e-10, atol=1e-12,
                    t_eval=np.arange(1, 41.0))
    np.testing.assert_allclose(path, sol.y.T, atol=2e-3)


def test_noise_free_path_reaches_attractor(default_params):
    eqs = find_equilibria(default_params)
    sys = phyto_system(default_params.with_noise(0.0, 1.0))
    end = simulate_path(sys, (0.50, 0.07), SimConfig(dt=1e-2, t_max=3000.0), every=300000)[-1]
    assert np.max(np.abs(end - eqs.bloom.state)) < 1e-3
    end = simulate_path(sys, (0.36, 0.005), SimConfig(dt=1e-2, t_max=3000.0), every=300000)[-1]
    assert np.max(np.abs(end - eqs.background.state)) < 1e-3


def test_paths_stay_in_domain():
    sys = phyto_system(ModelParams().with_noise(0.05, 1.0))
    path = simulate_path(sys, (0.45, 0.05), SimConfig(dt=1e-2, t_max=2000.0))
    lo, hi = np.array(sys.lower), np.array(sys.upper)
    assert np.all(path >= lo) and np.all(path <= hi)


def test_determinism_and_streams():
    sys = schlogl_system(sigma=0.1)
    cfg = SimConfig(dt=1e-2, t_max=50.0, seed=7)
    a = simulate_path(sys, 0.3, cfg)
    np.testing.assert_array_equal(a, simulate_path(sys, 0.3, cfg))
    assert not np.array_equal(a, simulate_path(sys, 0.3, cfg, stream=1))


def test_chunked_run_equals_single_run():
    sys = schlogl_system(sigma=0.1)
    cfg = SimConfig(dt=1e-2, t_max=10.0, seed=3)
    whole = simulate_path(sys, 0.3, cfg, n_steps=1000)
    rng = substream(3, 0)
    first = simulate_path(sys, 0.3, cfg, n_steps=400, generator=rng)
    second = simulate_path(sys, first[-1], cfg, n_steps=600, generator=rng)
    np.testing.assert_array_equal(whole, np.r_[first, second])


def test_invalid_inputs():
    sys = schlogl_system()
    with pytest.raises(ValueError, match="outside"):
        simulate_path(sys, 1.5, SimConfig(t_max=1.0))
    with pytest.raises(ValueError):
        SimConfig(dt=0)
    with pytest.raises(ValueError):
        SimConfig(boundary="absorb")


def test_schlogl_mfpt_matches_quadrature():
    start, target = EllipseRegion((0.2,), (0.015,)), EllipseRegion((0.8,), (0.015,))
    est = mc_mfpt(schlogl_system(sigma=0.1), start, target,
                  SimConfig(dt=1e-3, t_max=1e4, n_traj=2000, seed=11))
    xs = np.linspace(0.185, 0.215, 31)
    want = np.mean([mfpt_1d_quadrature(x, 0.785, 0.1) for x in xs])
    assert est.censored_fraction == 0
    assert abs(est.mean - want) < 4 * est.std_error + 0.02 * want


def test_mc_jobs_invariance():
    p = ModelParams().with_noise(0.025, 1.0)
    eqs = find_equilibria(p)
    r1 = EllipseRegion(eqs.background.state, (0.018, 0.008))
    r3 = EllipseRegion(eqs.bloom.state, (0.018, 0.008))
    sys = phyto_system(p)
    cfg = SimConfig(dt=1e-2, t_max=3000.0, n_traj=12, seed=5)
    a = mc_mfpt(sys, r1, r3, cfg)
    b = mc_mfpt(sys, r1, r3, SimConfig(dt=1e-2, t_max=3000.0, n_traj=12, seed=5, jobs=3))
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.censored, b.censored)
    assert a.mean == b.mean


def test_all_censored_raises():
    start, target = EllipseRegion((0.2,), (0.015,)), EllipseRegion((0.8,), (0.015,))
    with pytest.raises(NoTransitionsError):
        mc_mfpt(schlogl_system(sigma=0.02), start, target,
                SimConfig(dt=1e-2, t_max=1.0, n_traj=5))


def test_overlapping_regions_rejected():
    r = EllipseRegion((0.2,), (0.015,))
    with pytest.raises(ValueError, match="overlap"):
        mc_mfpt(schlogl_system(), r, EllipseRegion((0.21,), (0.015,)), SimConfig(n_traj=1))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 30), st.booleans()), min_size=2, max_size=40))
def test_kaplan_meier_matches_product_limit(obs):
    t = np.array([o[0] for o in obs], float)
    c = np.array([o[1] for o in obs])
    if c.all():
        c[0] = False
    mean, se = kaplan_meier_mean(t, c, 31.0)
    assert abs(mean - product_limit_mean(t, c, 31.0)) < 1e-9
    assert se >= 0


def test_kaplan_meier_without_censoring_is_sample_mean(rng):
    t = rng.exponential(10.0, 200)
    mean, se = kaplan_meier_mean(t, np.zeros(200, bool), t.max())
    assert abs(mean - t.mean()) < 1e-9
    # Greenwood with no censoring reduces to the biased sample standard error
    assert abs(se - t.std(ddof=0) / np.sqrt(200)) < 1e-9


def test_sample_in_ellipse(rng):
    r = EllipseRegion((0.35, 0.0), (0.018, 0.008))
    pts = np.array([sample_in_ellipse(r, rng, lower=np.array([0.3, 0.0])) for _ in range(500)])
    assert np.all(r.contains(pts.T))
    assert pts[:, 1].min() >= 0


def test_mfpt_csv(tmp_path):
    est = MfptEstimate(2.0, 0.1, 0.5, 2, np.array([1.0, 3.0]), np.array([False, True]))
    est.to_csv(tmp_path / "t.csv", {"seed": 0})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[1] == "traj_id,tau,censored" and lines[3] == "1,3.0,1"
    assert est.relative_error == 0.05


def test_stationary_histogram_symmetric_double_well(tmp_path):
    sys = schlogl_system(sigma=0.12)
    (m,) = stationary_histogram(sys, SimConfig(dt=1e-2, t_max=2e5, seed=2), burn_in=100.0,
                                bins=20, chunk=500_000)
    assert abs(m.mass.sum() - 1) < 1e-12
    # the potential is symmetric about 1/2
    left, right = m.mass[:10].sum(), m.mass[10:].sum()
    assert abs(left - right) < 0.1
    histograms_to_csv(tmp_path / "h.csv", [m])
    assert (tmp_path / "h.csv").read_text().count("\n") == 21


def test_immediate_absorption():
    """Start in a sliver at the wall with the target covering the rest of the domain."""
    dt = 1e-2
    est = mc_mfpt(schlogl_system(sigma=1.0), EllipseRegion((0.0,), (1e-3,)),
                  EllipseRegion((0.5005,), (0.4985,)), SimConfig(dt=dt, t_max=10.0, n_traj=200))
    assert est.censored_fraction == 0
    assert est.samples.min() == pytest.approx(dt)
    assert abs(est.mean - dt) < dt


def test_standard_error_shrinks_as_root_n():
    start, target = EllipseRegion((0.2,), (0.015,)), EllipseRegion((0.8,), (0.015,))
    sys = schlogl_system(sigma=0.15)
    ratios = []
    for seed in range(3):
        a = mc_mfpt(sys, start, target, SimConfig(dt=1e-2, t_max=1e4, n_traj=1000, seed=seed))
        b = mc_mfpt(sys, start, target, SimConfig(dt=1e-2, t_max=1e4, n_traj=2000, seed=seed))
        ratios.append(a.std_error / b.std_error)
    assert abs(np.mean(ratios) / np.sqrt(2) - 1) < 0.15


def _peaks(mass):
    m = np.convolve(mass, np.ones(5) / 5, mode="same")
    return [i for i in range(1, m.size - 1) if m[i] > m[i - 1] and m[i] >= m[i + 1]]


def test_biomass_marginal_bimodal():
    p = ModelParams(b1=2.1).with_noise(0.01, 1.0)
    eqs = find_equilibria(p)
    _, mu = stationary_histogram(phyto_system(p), SimConfig(dt=1e-2, t_max=4e5, seed=1),
                                 burn_in=1e3, bins=65, x0=eqs.background.state)
    c = mu.centers
    low = mu.mass[c < 0.02].max()
    high = mu.mass[(c > 0.06) & (c < 0.1)].max()
    valley = mu.mass[(c > 0.025) & (c < 0.05)].min()
    assert valley < 0.5 * min(low, high)
    peak_u = c[(c > 0.06) & (c < 0.1)][np.argmax(mu.mass[(c > 0.06) & (c < 0.1)])]
    assert abs(peak_u - 0.078) < 0.01


def test_temperature_secondary_peak_small_at_low_b1():
    p = ModelParams(b1=2.0).with_noise(0.01, 1.0)
    eqs = find_equilibria(p)
    mt, _ = stationary_histogram(phyto_system(p), SimConfig(dt=1e-2, t_max=2e5, seed=2),
                                 burn_in=1e3, bins=60, x0=eqs.background.state)
    c = mt.centers
    main = mt.mass.max()
    secondary = mt.mass[np.abs(c - 0.5) < 0.03].max()
    assert 0 <= secondary < 0.1 * main
