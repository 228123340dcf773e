"""Gaussian building blocks.

Joint moments of the latent factors and the outcome history, Schur-complement
conditioning, univariate and bivariate normal probabilities, and
Gauss-Hermite quadrature against multivariate normal laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_factor, cho_solve
from scipy.special import erfc

from .errors import DimensionError, ParameterError, SingularityError

_JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
_SQRT2 = math.sqrt(2.0)
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MvnDist:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionError(f"mean of length {mean.size} with covariance {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(cov).max(initial=0.0))):
            raise ParameterError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if mean.size and np.linalg.eigvalsh(cov).min() < -1e-10 * max(np.trace(cov), 1.0):
            raise ParameterError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, idx) -> "MvnDist":
        idx = np.asarray(idx, dtype=int)
        return MvnDist(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def linear(self, x: np.ndarray, offset=0.0) -> "MvnDist":
        """Law of ``x @ X + offset``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return MvnDist(x @ self.mean + offset, x @ self.cov @ x.T)


@dataclass(frozen=True)
class DesignMatrices:
    z: np.ndarray
    mu_y: np.ndarray

    @property
    def h(self) -> int:
        return self.mu_y.size


def design_matrices(params, a, c) -> DesignMatrices:
    """Random-effect design ``Z`` (rows ``1, a_{k-1}, a_{k-2}``) and mean ``mu_Y``.

    ``a`` and ``c`` are the exposures and confounders at times ``1..h``;
    ``mu_Y[k] = mu + c_{k-1} beta_C + a_{k-1} beta_1 + a_{k-2} beta_2``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    if a.size != c.size:
        raise DimensionError("exposures and confounders differ in length")
    h = a.size
    lag1 = np.concatenate([[0.0], a[:-1]])[:h]
    lag2 = np.concatenate([[0.0, 0.0], a[:-2]])[:h]
    c_prev = np.concatenate([[0.0], c[:-1]])[:h]
    z = np.column_stack([np.ones(h), lag1, lag2])
    mu_y = params.mu + c_prev * params.beta_c + lag1 * params.beta1 + lag2 * params.beta2
    return DesignMatrices(z, mu_y)


def build_marginal_moments(params, design) -> MvnDist:
    """Joint law of ``(U0, U1, U2, Y_1, ..., Y_h)`` given exposures and confounders.

    ``design`` is a :class:`DesignMatrices` or any object with ``a`` and ``c``
    arrays (such as a history).  Outcomes are on the linear-predictor scale.
    """
    if not isinstance(design, DesignMatrices):
        design = design_matrices(params, design.a, design.c)
    if design.h < 1:
        raise DimensionError("a history needs at least one time point")
    sig = params.latent_cov
    z = design.z
    cross = sig @ z.T
    cov = np.block([[sig, cross], [cross.T, z @ cross + params.sigma**2 * np.eye(design.h)]])
    return MvnDist(np.concatenate([np.zeros(3), design.mu_y]), cov)


def robust_cholesky(mat: np.ndarray):
    """Cholesky factor (scipy ``cho_factor`` form) with a graduated diagonal jitter."""
    mat = np.asarray(mat, dtype=float)
    dim = mat.shape[0]
    scale = np.trace(mat) / dim if dim else 0.0
    for eps in _JITTER_LADDER:
        try:
            return cho_factor(mat + eps * scale * np.eye(dim), lower=True), eps
        except np.linalg.LinAlgError:
            continue
    raise SingularityError(f"matrix of dimension {dim} is singular beyond the jitter ladder")


def condition_gaussian(joint: MvnDist, observed_idx, observed_values, full: bool = False) -> MvnDist:
    """Law of the unobserved coordinates of ``joint`` given the observed ones.

    With ``full=True`` the result keeps every coordinate in its original
    position; observed coordinates become point masses at their values.
    """
    obs = np.asarray(observed_idx, dtype=int).reshape(-1)
    vals = np.asarray(observed_values, dtype=float).reshape(-1)
    if obs.size != vals.size:
        raise DimensionError("observed indices and values differ in length")
    if obs.size and (obs.min() < 0 or obs.max() >= joint.dim or np.unique(obs).size != obs.size):
        raise DimensionError("invalid observed indices")
    free = np.setdiff1d(np.arange(joint.dim), obs)
    if obs.size == 0:
        post_mean, post_cov = joint.mean[free], joint.cov[np.ix_(free, free)]
    else:
        s11 = joint.cov[np.ix_(free, free)]
        s12 = joint.cov[np.ix_(free, obs)]
        s22 = joint.cov[np.ix_(obs, obs)]
        factor, _ = robust_cholesky(s22)
        gain = cho_solve(factor, s12.T).T
        post_mean = joint.mean[free] + gain @ (vals - joint.mean[obs])
        post_cov = s11 - gain @ s12.T
        post_cov = 0.5 * (post_cov + post_cov.T)
        # clip tiny negative eigen-noise produced by cancellation
        if post_cov.size:
            w, v = np.linalg.eigh(post_cov)
            if w.min() < 0:
                post_cov = (v * np.clip(w, 0.0, None)) @ v.T
    if not full:
        return MvnDist(post_mean, post_cov)
    mean = np.empty(joint.dim)
    cov = np.zeros((joint.dim, joint.dim))
    mean[obs] = vals
    mean[free] = post_mean
    cov[np.ix_(free, free)] = post_cov
    return MvnDist(mean, cov)


# ---------------------------------------------------------------------------
# normal probabilities


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function."""
    out = 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)
    return out if np.ndim(out) else float(out)


def _phi(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


@lru_cache(maxsize=None)
def _legendre(n: int):
    return leggauss(n)


def bvn_upper(h: float, k: float, r: float) -> float:
    """``P(X > h, Y > k)`` for standard bivariate normal ``(X, Y)`` with correlation ``r``.

    Drezner-Wesolowsky integration with the Gauss-Legendre refinements of
    Genz (2004): 6, 12 or 20 nodes by ``|r|``, and an asymptotic expansion
    for ``|r| >= 0.925``.
    """
    if math.isnan(h) or math.isnan(k) or math.isnan(r):
        raise ParameterError("NaN input to bivariate normal")
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return _phi(-k)
    if k == -math.inf:
        return _phi(-h)
    r = min(1.0, max(-1.0, r))
    ar = abs(r)
    x, w = _legendre(6 if ar < 0.3 else 12 if ar < 0.75 else 20)
    hk = h * k
    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(r)
        sn = np.sin(0.5 * asr * (x + 1.0))
        bvn = float(np.dot(w, np.exp((sn * hk - hs) / (1.0 - sn * sn))))
        return bvn * asr / (2.0 * _TWO_PI) + _phi(-h) * _phi(-k)
    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if ar < 1.0:
        a_s = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a_s)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        bvn = a * math.exp(-0.5 * (bs / a_s + hk)) * (
            1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0)
        if hk > -160.0:
            b = math.sqrt(bs)
            bvn -= (math.exp(-0.5 * hk) * math.sqrt(_TWO_PI) * _phi(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
        a *= 0.5
        xs = (a * (x + 1.0)) ** 2
        rs = np.sqrt(1.0 - xs)
        with np.errstate(under="ignore"):
            terms = (np.exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs
                     - np.exp(-0.5 * (bs / xs + hk)) * (1.0 + c * xs * (1.0 + d * xs)))
        bvn += a * float(np.dot(w, terms))
        bvn = -bvn / _TWO_PI
    if r > 0:
        bvn += _phi(-max(h, k))
    else:
        bvn = -bvn + max(0.0, _phi(-h) - _phi(-k))
    return min(1.0, max(0.0, bvn))


def _interval_prob(mean, sd, lo, hi):
    if sd == 0.0:
        return float(lo < mean <= hi)
    return max(0.0, _phi(-(lo - mean) / sd) - _phi(-(hi - mean) / sd)) if lo < hi else 0.0


def bvn_rect_prob(mean, cov, lower, upper) -> float:
    """``P(lower < X <= upper)`` for a bivariate normal ``X`` (bounds may be infinite).

    Degenerate coordinates (zero variance) are treated as point masses.
    """
    mean = np.asarray(mean, dtype=float).reshape(2)
    cov = np.asarray(cov, dtype=float).reshape(2, 2)
    lower = np.asarray(lower, dtype=float).reshape(2)
    upper = np.asarray(upper, dtype=float).reshape(2)
    if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower > upper):
        raise ParameterError("rectangle bounds must satisfy lower <= upper")
    MvnDist(mean, cov)  # validates symmetry and PSD
    v1, v2 = cov[0, 0], cov[1, 1]
    if v1 <= 0.0 or v2 <= 0.0:
        i, j = (0, 1) if v1 <= 0.0 else (1, 0)
        inside = lower[i] < mean[i] <= upper[i]
        if not inside:
            return 0.0
        return _interval_prob(mean[j], math.sqrt(max(cov[j, j], 0.0)), lower[j], upper[j])
    s1, s2 = math.sqrt(v1), math.sqrt(v2)
    r = cov[0, 1] / (s1 * s2)
    lo = (lower - mean) / np.array([s1, s2])
    hi = (upper - mean) / np.array([s1, s2])
    total = (bvn_upper(lo[0], lo[1], r) - bvn_upper(hi[0], lo[1], r)
             - bvn_upper(lo[0], hi[1], r) + bvn_upper(hi[0], hi[1], r))
    return min(1.0, max(0.0, total))


# ---------------------------------------------------------------------------
# quadrature


def gauss_hermite_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes with weights normalized to sum to one."""
    order = int(order)
    if not 2 <= order <= 64:
        raise ParameterError(f"quadrature order must lie in [2, 64], got {order}")
    nodes, weights = hermegauss(order)
    return nodes, weights / weights.sum()


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        if w.min() < -1e-10 * max(np.trace(cov), 1.0):
            raise ParameterError("covariance is not positive semidefinite")
        return v * np.sqrt(np.clip(w, 0.0, None))


def mvn_quadrature_rule(dist: MvnDist, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product nodes (``N x d``) and weights for ``dist`` (up to 3 dimensions)."""
    if dist.dim > 3:
        raise DimensionError("tensor-product quadrature is limited to 3 dimensions")
    nodes, weights = gauss_hermite_nodes(order)
    grids = np.meshgrid(*([nodes] * dist.dim), indexing="ij")
    wgrids = np.meshgrid(*([weights] * dist.dim), indexing="ij")
    std = np.column_stack([g.reshape(-1) for g in grids])
    w = np.prod(np.column_stack([g.reshape(-1) for g in wgrids]), axis=1)
    points = dist.mean + std @ _psd_factor(dist.cov).T
    return points, w


def mvn_quadrature(dist: MvnDist, f: Callable[[np.ndarray], np.ndarray], order: int = 32) -> float:
    """Gauss-Hermite approximation of ``E[f(X)]`` for ``X ~ dist``.

    ``f`` receives an ``N x d`` array of nodes and returns ``N`` values.
    """
    points, w = mvn_quadrature_rule(dist, order)
    return float(np.dot(w, np.asarray(f(points), dtype=float).reshape(-1)))
