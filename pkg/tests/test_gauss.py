import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from cwce_lab import simulate_panel
from cwce_lab.errors import DimensionError, ParameterError, SingularityError
from cwce_lab.gauss import (MvnDist, build_marginal_moments, bvn_rect_prob, bvn_upper,
                            condition_gaussian, design_matrices, gauss_hermite_nodes,
                            mvn_quadrature, mvn_quadrature_rule, robust_cholesky)


# --- joint moments --------------------------------------------------------

def test_outcome_variance_example(gaussian):
    joint = build_marginal_moments(gaussian, design_matrices(gaussian, [1, 1, 0], [0, 0, 0]))
    assert joint.cov[5, 5] == pytest.approx(151.0)


def test_latent_outcome_covariance(gaussian):
    a = np.array([1, 0, 1, 1])
    joint = build_marginal_moments(gaussian, design_matrices(gaussian, a, np.zeros(4)))
    lag1 = np.concatenate([[0], a[:-1]])
    np.testing.assert_allclose(joint.cov[1, 3:], lag1 * 100.0)


def test_joint_matches_simulation(gaussian):
    """Empirical moments of simulated (U, Y) for a fixed exposure path match the closed form."""
    n = 200_000
    gen = np.random.default_rng(3)
    u = gen.standard_normal((n, 3)) @ gaussian.latent_factor().T
    a = np.array([1, 1, 0, 1])
    d = design_matrices(gaussian, a, np.zeros(4))
    y = d.mu_y + u @ d.z.T + gen.standard_normal((n, 4))
    joint = build_marginal_moments(gaussian, d)
    emp = np.cov(np.column_stack([u, y]).T)
    np.testing.assert_allclose(emp, joint.cov, atol=0.03 * joint.cov.max())


def test_mvn_validation():
    with pytest.raises(DimensionError):
        MvnDist([0, 0], np.eye(3))
    with pytest.raises(ParameterError):
        MvnDist([0, 0], [[1, 0.5], [0.4, 1]])
    with pytest.raises(ParameterError):
        MvnDist([0, 0], [[1, 2], [2, 1]])


# --- conditioning ---------------------------------------------------------

def test_condition_bivariate_example():
    joint = MvnDist([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    post = condition_gaussian(joint, [1], [2.0])
    assert post.mean[0] == pytest.approx(1.0)
    assert post.cov[0, 0] == pytest.approx(0.75)


def test_condition_full_layout():
    joint = MvnDist([1.0, 2.0, 3.0], [[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.5]])
    full = condition_gaussian(joint, [1], [0.0], full=True)
    assert full.mean[1] == 0.0 and full.cov[1, 1] == 0.0
    part = condition_gaussian(joint, [1], [0.0])
    np.testing.assert_allclose(full.mean[[0, 2]], part.mean)


def test_condition_matches_precision_form(gaussian):
    panel = simulate_panel(gaussian, 1, 6, 2)
    h = panel.history(0)
    joint = build_marginal_moments(gaussian, h)
    post = condition_gaussian(joint, np.arange(3, 9), h.y)
    d = design_matrices(gaussian, h.a, h.c)
    prec = np.linalg.inv(gaussian.latent_cov) + d.z.T @ d.z
    cov = np.linalg.inv(prec)
    np.testing.assert_allclose(post.cov, cov, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(post.mean, cov @ d.z.T @ (h.y - d.mu_y), rtol=1e-9, atol=1e-9)


def test_condition_nothing_observed():
    joint = MvnDist([1.0, 2.0], np.eye(2))
    post = condition_gaussian(joint, [], [])
    np.testing.assert_array_equal(post.mean, joint.mean)


def test_condition_on_singular_block_uses_jitter():
    joint = MvnDist([0.0, 0.0, 0.0], [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 2.0]])
    post = condition_gaussian(joint, [0, 1], [0.5, 0.5])
    assert post.mean[0] == pytest.approx(0.5, abs=1e-6)


def test_robust_cholesky_gives_up():
    with pytest.raises(SingularityError):
        robust_cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_condition_bad_indices():
    with pytest.raises(DimensionError):
        condition_gaussian(MvnDist([0.0], [[1.0]]), [1], [0.0])


# --- bivariate normal probabilities --------------------------------------

def test_orthant_example():
    assert bvn_upper(0.0, 0.0, 0.5) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_orthant_monte_carlo():
    x = np.random.default_rng(0).standard_normal((10_000_000, 2)).astype(np.float32)
    x[:, 1] = 0.5 * x[:, 0] + math.sqrt(0.75) * x[:, 1]
    p = np.mean((x[:, 0] > 0) & (x[:, 1] > 0))
    assert abs(p - 1 / 3) < 4 * math.sqrt(2 / 9 / 1e7)


@pytest.mark.parametrize("h,k,r", [(0.3, -1.2, 0.4), (-2.0, 1.5, -0.85), (1.0, 1.0, 0.95),
                                   (-0.5, -0.5, -0.99), (3.0, -3.0, 0.2), (0.1, 0.2, 0.0)])
def test_bvn_upper_matches_scipy(h, k, r):
    ref = multivariate_normal([0, 0], [[1, r], [r, 1]]).cdf([-h, -k])
    assert bvn_upper(h, k, r) == pytest.approx(ref, abs=1e-7)


def test_bvn_extreme_correlations():
    assert bvn_upper(0.5, 0.2, 1.0) == pytest.approx(1 - 0.6914624612740131, abs=1e-12)
    assert bvn_upper(0.5, -0.2, -1.0) == pytest.approx(0.0, abs=1e-12)
    assert bvn_upper(-0.5, -0.2, -1.0) == pytest.approx(0.6914624612740131 + 0.579259709439103 - 1, abs=1e-12)


def test_rect_prob_partitions_sum_to_one():
    mean, cov = [120.0, 105.0], [[150.0, 140.0], [140.0, 151.0]]
    inf = math.inf
    cells = [bvn_rect_prob(mean, cov, [lo1, lo2], [hi1, hi2])
             for lo1, hi1 in ((-inf, 120), (120, inf)) for lo2, hi2 in ((-inf, 120), (120, inf))]
    assert sum(cells) == pytest.approx(1.0, abs=1e-12)


def test_rect_prob_point_mass():
    assert bvn_rect_prob([0.0, 1.0], [[0.0, 0.0], [0.0, 1.0]], [-1, -math.inf], [1, 1.0]) == pytest.approx(0.5)
    assert bvn_rect_prob([2.0, 1.0], [[0.0, 0.0], [0.0, 1.0]], [-1, -math.inf], [1, 1.0]) == 0.0


def test_rect_prob_invalid_bounds():
    with pytest.raises(ParameterError):
        bvn_rect_prob([0, 0], np.eye(2), [1, 0], [0, 1])


# --- quadrature -----------------------------------------------------------

@pytest.mark.parametrize("order", [2, 5, 16, 32, 64])
def test_hermite_exactness(order):
    nodes, w = gauss_hermite_nodes(order)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    # E[X^(2j)] = (2j - 1)!! is reproduced for degree <= 2 order - 1
    for j in range(0, order):
        exact = float(np.prod(np.arange(2.0 * j - 1, 0, -2))) if j else 1.0
        assert np.dot(w, nodes ** (2 * j)) == pytest.approx(exact, rel=1e-12)
        assert abs(np.dot(w, nodes ** (2 * j + 1))) < 1e-12 * max(exact, 1.0)


def test_hermite_order_bounds():
    with pytest.raises(ParameterError):
        gauss_hermite_nodes(1)
    with pytest.raises(ParameterError):
        gauss_hermite_nodes(65)


def test_lognormal_moment_example():
    dist = MvnDist([0.0], [[0.25]])
    assert mvn_quadrature(dist, lambda x: np.exp(x[:, 0])) == pytest.approx(math.exp(0.125), abs=1e-12)


def test_quadrature_second_moments():
    dist = MvnDist([1.0, -2.0, 0.5], [[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]])
    points, w = mvn_quadrature_rule(dist, 6)
    np.testing.assert_allclose(w @ points, dist.mean, atol=1e-12)
    c = points - dist.mean
    np.testing.assert_allclose((c * w[:, None]).T @ c, dist.cov, atol=1e-12)


def test_quadrature_singular_covariance():
    dist = MvnDist([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])
    assert mvn_quadrature(dist, lambda x: (x[:, 0] - x[:, 1]) ** 2) == pytest.approx(0.0, abs=1e-12)


def test_quadrature_dimension_limit():
    with pytest.raises(DimensionError):
        mvn_quadrature_rule(MvnDist(np.zeros(4), np.eye(4)))
