import dataclasses
import math

import numpy as np
import pytest
from scipy.stats import gaussian_kde, norm

from cwce_lab import (Degenerate, Discrete, Gaussian, Grid, ScmParams, cwce, simulate_panel, true_ices)
from cwce_lab.errors import NotConvergedError, ParameterError, UnsupportedError
from cwce_lab.inference import (DensityMode, bandwidth_nrd0, classification_table, estimate_cwce,
                                estimate_ice, expected_cwce, ks_distance, map_ice, marginal_ice_density,
                                plug_in_params)
from cwce_lab.reml import fit_lmm_reml


@pytest.fixture(scope="module")
def gaussian_fit():
    panel = simulate_panel(ScmParams.gaussian_lmm(), 200, 10, 1)
    return panel, fit_lmm_reml(panel)


def test_plug_in_refuses_unconverged(gaussian_fit):
    _, fit = gaussian_fit
    bad = dataclasses.replace(fit, converged=False)
    with pytest.raises(NotConvergedError):
        plug_in_params(bad)


def test_estimate_close_to_truth(gaussian_fit):
    panel, fit = gaussian_fit
    h = panel.history(0)
    est = estimate_cwce(fit, h, 3, (1, 1))
    true = cwce(h, panel.params, 3, (1, 1))
    assert ks_distance(est, true) < 0.2
    summary = estimate_ice(est)
    assert summary.point == pytest.approx(est.mean)
    assert summary.expected_cwce == pytest.approx(est.mean)


def test_point_estimates():
    assert map_ice(Gaussian(-3.0, 4.0)) == -3.0
    assert map_ice(Discrete(0.1, 0.3, 0.6)) == 1
    assert map_ice(Degenerate(2.5)) == 2.5
    g = Grid.normalized(np.linspace(0, 4, 401), np.exp(-0.5 * (np.linspace(0, 4, 401) - 1.0) ** 2))
    assert map_ice(g) == pytest.approx(1.0)
    assert expected_cwce(Discrete(0.1, 0.3, 0.6)) == pytest.approx(0.5)


def test_bandwidth_rule_of_thumb():
    x = np.arange(1.0, 11.0)
    # sd = 3.0277 is below IQR / 1.34 = 3.3582, so the sd branch applies
    assert bandwidth_nrd0(x) == pytest.approx(0.9 * np.std(x, ddof=1) * 10 ** -0.2, rel=1e-12)
    assert bandwidth_nrd0(x) == pytest.approx(1.71928, abs=1e-5)
    assert bandwidth_nrd0(np.array([1.0, 1.0, 1.0, 5.0])) > 0
    with pytest.raises(ParameterError):
        bandwidth_nrd0(np.array([1.0]))


def test_kernel_of_expectations_matches_kde():
    gen = np.random.default_rng(0)
    means = gen.normal(-15, 11, 300)
    dists = [Gaussian(m, 4.0) for m in means]
    pts = np.linspace(-70, 40, 801)
    dens = marginal_ice_density(dists, DensityMode.KERNEL_OF_EXPECTATIONS, points=pts)
    bw = bandwidth_nrd0(means)
    kde = gaussian_kde(means, bw_method=bw / means.std(ddof=1))
    ref = kde(pts)
    np.testing.assert_allclose(dens.density, ref / np.trapezoid(ref, pts), rtol=1e-6, atol=1e-12)


def test_average_density_is_normalized_mixture():
    dists = [Gaussian(-2.0, 1.0), Gaussian(3.0, 4.0)]
    pts = np.linspace(-10, 15, 2001)
    dens = marginal_ice_density(dists, points=pts)
    mix = 0.5 * (norm.pdf(pts, -2, 1) + norm.pdf(pts, 3, 2))
    np.testing.assert_allclose(dens.density, mix, atol=1e-4)
    assert np.trapezoid(dens.density, pts) == pytest.approx(1.0)


def test_average_density_handles_point_masses():
    pts = np.linspace(-2, 2, 41)
    narrow = marginal_ice_density([Gaussian(0.0, 1e-14), Gaussian(1.0, 1e-14)], points=pts)
    points = marginal_ice_density([Degenerate(0.0), Degenerate(1.0)], points=pts)
    np.testing.assert_allclose(narrow.density, points.density)
    assert points.density[20] == pytest.approx(0.5 / 0.1)
    with pytest.raises(ParameterError):
        marginal_ice_density([Degenerate(0.0)])
    with pytest.raises(ParameterError):
        marginal_ice_density([Degenerate(0.0), Gaussian(0.0, 1.0)])  # mixed kinds


def test_average_density_rejects_discrete():
    with pytest.raises(UnsupportedError):
        marginal_ice_density([Discrete(0.1, 0.8, 0.1)] * 2)


def test_ks_distance():
    p, q = Gaussian(0.0, 1.0), Gaussian(0.5, 2.25)
    grid = np.linspace(-20, 20, 400_001)
    dense = np.max(np.abs(p.cdf(grid) - q.cdf(grid)))
    assert ks_distance(p, q) == pytest.approx(dense, abs=1e-8)
    assert ks_distance(p, p) == 0.0
    assert ks_distance(Gaussian(0.0, 1.0), Gaussian(1.0, 1.0)) == pytest.approx(2 * norm.cdf(0.5) - 1)
    assert ks_distance(Degenerate(0.0), Gaussian(0.0, 1.0)) == pytest.approx(0.5, abs=1e-3)


def test_perfect_estimator_classifies():
    params = ScmParams.truncated_lmm(sigma=1e-3)
    panel = simulate_panel(params, 200, 40, 2)
    table = classification_table(panel, params, 3, (1, 1))
    assert table.misclassification < 0.01
    assert table.table.sum() == pytest.approx(1.0)
    assert table.counts.sum() == panel.n


def test_classification_layout():
    params = ScmParams.truncated_lmm()
    panel = simulate_panel(params, 100, 3, 3)
    table = classification_table(panel, params, 3, (1, 1))
    truth = np.rint(true_ices(panel, (1, 1), 3)).astype(int)
    # rows are the true effect
    np.testing.assert_array_equal(table.counts.sum(axis=1), [np.sum(truth == v) for v in (-1, 0, 1)])
    rows = table.row_normalized()
    assert np.allclose(rows.sum(axis=1)[table.counts.sum(axis=1) > 0], 1.0)


def test_classification_requires_truncated(gaussian_fit):
    panel, fit = gaussian_fit
    with pytest.raises(UnsupportedError):
        classification_table(panel, fit, 3, (1, 1))


@pytest.fixture(scope="module")
def large_design():
    panel = simulate_panel(ScmParams.gaussian_lmm(), 1000, 100, 5)
    return panel, fit_lmm_reml(panel)


_PTS = np.linspace(-75.0, 45.0, 1201)


def _average(panel, params_or_fit, h):
    if isinstance(params_or_fit, ScmParams):
        dists = [cwce(panel.history(i, h), params_or_fit, 3, (1, 1)) for i in range(panel.n)]
    else:
        dists = [estimate_cwce(params_or_fit, panel.history(i, h), 3, (1, 1)) for i in range(panel.n)]
    return marginal_ice_density(dists, points=_PTS).density


@pytest.mark.slow
@pytest.mark.parametrize("h", [3, 100])
def test_average_density_tracks_true_parameters(large_design, h):
    panel, fit = large_design
    est = _average(panel, fit, h)
    true = _average(panel, panel.params, h)
    assert np.max(np.abs(est - true)) < 0.02 * true.max()


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="1000 narrow posteriors leave about 14% sampling ripple even with "
                                       "the true parameters; 2% of the peak is out of reach at this n")
def test_average_density_matches_population_law(large_design):
    panel, fit = large_design
    truth = norm.pdf(_PTS, -15, math.sqrt(125))
    assert np.max(np.abs(_average(panel, fit, 100) - truth)) < 0.02 * truth.max()
