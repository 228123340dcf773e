import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cwce_lab import History, ScmParams, cwce_gaussian, cwce_truncated, simulate_panel
from cwce_lab.gauss import (MvnDist, bvn_rect_prob, bvn_upper, condition_gaussian, gauss_hermite_nodes)
from cwce_lab.inference import ks_distance
from cwce_lab.cwce import Gaussian, Discrete
from cwce_lab.reml import LongData, ModelSpec, long_data, restricted_loglik
from cwce_lab.rng import uniforms
from cwce_lab.scm import marginal_ice_moments

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

pos = st.floats(0.1, 20.0)
small = st.floats(-20.0, 20.0)


@st.composite
def gaussian_params(draw, correlated=True):
    r01 = draw(st.floats(-0.6, 0.6)) if correlated else 0.0
    corr = ((1.0, r01, 0.0), (r01, 1.0, 0.0), (0.0, 0.0, 1.0))
    return ScmParams.gaussian_lmm(mu=draw(st.floats(50, 150)), beta1=draw(small), beta2=draw(small),
                                  beta_c=draw(small), tau0=draw(pos), tau1=draw(pos), tau2=draw(pos),
                                  sigma=draw(pos), latent_corr=corr)


@SETTINGS
@given(gaussian_params(correlated=False), st.integers(1, 10), st.integers(0, 2**32), st.integers(2, 4))
def test_unexposed_history_identity(params, h, seed, k_off):
    gen = np.random.default_rng(seed)
    hist = History(np.zeros(h), gen.choice([0.7, -0.3], h), gen.normal(params.mu, 10.0, h))
    k = min(h + 1, max(2, k_off))
    dist = cwce_gaussian(hist, params, k, np.ones(k - 1))
    mean, var = marginal_ice_moments(params, np.ones(k - 1), k)
    assert abs(dist.mean - mean) <= 1e-10 * max(1.0, abs(mean))
    assert abs(dist.var - var) <= 1e-10 * max(1.0, var)


def test_unexposed_history_informs_correlated_slopes():
    # the identity rests on independent latent effects: an unexposed history
    # reveals the intercept, which then carries information on correlated slopes
    params = ScmParams.gaussian_lmm(latent_corr=((1.0, 0.5, 0.0), (0.5, 1.0, 0.0), (0.0, 0.0, 1.0)))
    hist = History(np.zeros(3), np.full(3, 0.7), np.full(3, 140.0))
    mean, _ = marginal_ice_moments(params, (1, 1), 3)
    assert abs(cwce_gaussian(hist, params, 3, (1, 1)).mean - mean) > 1.0


@SETTINGS
@given(gaussian_params(), st.integers(3, 12), st.integers(0, 2**32))
def test_posterior_never_wider_than_prior(params, h, seed):
    panel = simulate_panel(params, 1, h, seed)
    dist = cwce_gaussian(panel.history(0), params, 3, (1, 1))
    _, var = marginal_ice_moments(params, (1, 1), 3)
    assert dist.var <= var * (1 + 1e-9)


@SETTINGS
@given(st.integers(3, 8), st.integers(0, 2**32), st.floats(90.0, 150.0), st.floats(0.2, 5.0))
def test_truncated_pmf_is_a_distribution(h, seed, delta, sigma):
    params = ScmParams.truncated_lmm(delta=delta, sigma=sigma)
    panel = simulate_panel(params, 1, h, seed)
    dist = cwce_truncated(panel.history(0), params, 3, (1, 1))
    assert np.all(dist.probs >= 0)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert dist.mode() in (-1, 0, 1)


@SETTINGS
@given(st.floats(-0.999, 0.999))
def test_arcsin_orthant_identity(r):
    assert bvn_upper(0.0, 0.0, r) == pytest.approx(0.25 + math.asin(r) / (2 * math.pi), abs=1e-12)


@SETTINGS
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.99, 0.99), st.floats(-3, 3), st.floats(-3, 3))
def test_rectangle_partition(m1, m2, r, c1, c2):
    cov = [[1.0, r], [r, 1.0]]
    inf = math.inf
    total = sum(bvn_rect_prob([m1, m2], cov, [a, b], [c, d])
                for a, c in ((-inf, c1), (c1, inf)) for b, d in ((-inf, c2), (c2, inf)))
    assert total == pytest.approx(1.0, abs=1e-12)


@SETTINGS
@given(st.integers(2, 6), st.integers(0, 2**32))
def test_conditioning_shrinks_covariance(dim, seed):
    gen = np.random.default_rng(seed)
    f = gen.standard_normal((dim, dim))
    joint = MvnDist(gen.standard_normal(dim), f @ f.T + 0.1 * np.eye(dim))
    obs = np.sort(gen.choice(dim, size=gen.integers(1, dim), replace=False))
    post = condition_gaussian(joint, obs, gen.standard_normal(obs.size), full=True)
    free = np.setdiff1d(np.arange(dim), obs)
    diff = joint.cov[np.ix_(free, free)] - post.cov[np.ix_(free, free)]
    assert np.linalg.eigvalsh(diff).min() >= -1e-9
    assert np.linalg.eigvalsh(post.cov).min() >= -1e-9


@SETTINGS
@given(st.integers(2, 40), st.integers(0, 2**32))
def test_hermite_polynomial_exactness(order, seed):
    gen = np.random.default_rng(seed)
    coef = gen.standard_normal(2 * order)
    nodes, w = gauss_hermite_nodes(order)
    poly = np.polynomial.hermite_e.HermiteE(coef)
    # E[He_j(X)] = 0 for j >= 1 under the standard normal
    # cancellation between large high-order terms sets the attainable accuracy
    scale = sum(abs(c) * np.dot(w, np.abs(np.polynomial.hermite_e.HermiteE.basis(j)(nodes)))
                for j, c in enumerate(coef))
    assert np.dot(w, poly(nodes)) == pytest.approx(coef[0], abs=1e-12 * scale)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@SETTINGS
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4), st.integers(0, 2**32))
def test_reml_location_invariance(g, seed):
    panel = simulate_panel(ScmParams.gaussian_lmm(), 8, 5, seed % 1000)
    spec = ModelSpec()
    data = long_data(panel, spec)
    shifted = LongData(data.x, data.z, data.y + data.x @ np.array(g), data.offsets,
                       data.fixed_names, data.random_names)
    vc = [5.0, 10.0, 5.0, 1.0]
    assert restricted_loglik(shifted, spec, vc) == pytest.approx(restricted_loglik(data, spec, vc), abs=1e-8)


@SETTINGS
@given(small, pos, small, pos)
def test_ks_distance_is_symmetric_and_bounded(m1, s1, m2, s2):
    p, q = Gaussian(m1, s1 * s1), Gaussian(m2, s2 * s2)
    d = ks_distance(p, q)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(ks_distance(q, p), abs=1e-12)


@SETTINGS
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**20), st.integers(1, 50), st.integers(1, 50))
def test_uniform_streams_prefix_consistent(seed, stream, a, b):
    short, long = uniforms(seed, stream, a), uniforms(seed, stream, a + b)
    np.testing.assert_array_equal(short, long[:a])
    assert np.all((long > 0) & (long < 1))


@SETTINGS
@given(st.integers(1, 12), st.integers(3, 9), st.integers(0, 2**32))
def test_panel_subsets_match_smaller_simulation(n, m, seed):
    params = ScmParams.lognormal_lmm()
    big = simulate_panel(params, n + 3, m + 2, seed)
    np.testing.assert_array_equal(big.subset(n, m).y, simulate_panel(params, n, m, seed).y)


@SETTINGS
@given(st.floats(0, 1), st.floats(0, 1))
def test_discrete_mode_is_most_probable(a, b):
    probs = np.array([a, b, 1.0]) / (a + b + 1.0)
    dist = Discrete(*probs)
    assert dist.probs[dist.mode() + 1] == pytest.approx(dist.probs.max())
