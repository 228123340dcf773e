"""Cross-world causal effect (CWCE) distributions.

The CWCE at time ``k`` is the law of ``Y_k^a - Y_k^0`` given an individual's
observed history.  Under the linear mixed assignment both potential outcomes
are affine in the latent factors ``U = (U0, U1, U2)`` and, for times beyond
the history, in the fresh outcome noise ``N_k``.  Inside the history the
noise is a deterministic function of ``U`` and the observed outcome, so the
whole problem reduces to the Gaussian posterior of ``U``.

Closed forms are provided for every model kind, together with a literal
Monte-Carlo sampler that serves as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from . import gauss, rng
from .errors import DimensionError, ParameterError, UnsupportedError
from .scm import History, ScmKind, ScmParams, as_regime, lmm_linear, observe

__all__ = [
    "History", "Gaussian", "Grid", "Discrete", "Degenerate", "CwceDistribution",
    "CrossWorldJoint", "MonteCarloCwce", "GridSpec", "posterior_latents",
    "cwce_gaussian", "cwce_lognormal", "cross_world_joint_truncated", "cwce_truncated",
    "cwce_crossover", "cwce", "cwce_monte_carlo", "predict_potential_outcome",
    "distribution_from_dict",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# distribution objects


@dataclass(frozen=True)
class Gaussian:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var >= 0:
            raise ParameterError(f"Gaussian variance must be nonnegative, got {self.var}")

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)

    def expectation(self) -> float:
        return float(self.mean)

    def mode(self) -> float:
        return float(self.mean)

    def variance(self) -> float:
        return float(self.var)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.var) / (self.sd * _SQRT_2PI)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.var == 0.0:
            return (x >= self.mean).astype(float)
        return ndtr((x - self.mean) / self.sd)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mean": float(self.mean), "var": float(self.var)}


@dataclass(frozen=True)
class Grid:
    """Density tabulated on sorted, equally or unequally spaced points."""

    points: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        dens = np.asarray(self.density, dtype=float).reshape(-1)
        if pts.size < 2 or pts.size != dens.size:
            raise ParameterError("a grid needs at least two points and matching densities")
        if np.any(np.diff(pts) <= 0):
            raise ParameterError("grid points must be strictly increasing")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ParameterError("grid densities must be finite and nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "density", dens)

    @classmethod
    def normalized(cls, points, density) -> "Grid":
        points = np.asarray(points, dtype=float)
        density = np.clip(np.asarray(density, dtype=float), 0.0, None)
        total = np.trapezoid(density, points)
        if not total > 0:
            raise ParameterError("density has no mass on the grid")
        return cls(points, density / total)

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.points))

    def expectation(self) -> float:
        return float(np.trapezoid(self.points * self.density, self.points))

    def variance(self) -> float:
        mu = self.expectation()
        return float(np.trapezoid((self.points - mu) ** 2 * self.density, self.points))

    def mode(self) -> float:
        return float(self.points[np.argmax(self.density)])

    def pdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.points, self.density, left=0.0, right=0.0)

    def cdf(self, x):
        steps = 0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.points)
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        cum /= cum[-1]
        return np.interp(np.asarray(x, dtype=float), self.points, cum, left=0.0, right=1.0)

    def to_dict(self) -> dict:
        return {"kind": "grid", "points": self.points.tolist(), "density": self.density.tolist()}


@dataclass(frozen=True)
class Discrete:
    """Probability mass on the effects -1, 0 and +1."""

    p_minus1: float
    p_0: float
    p_plus1: float

    def __post_init__(self):
        p = self.probs
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ParameterError(f"invalid pmf {p.tolist()}")

    @property
    def probs(self) -> np.ndarray:
        return np.array([self.p_minus1, self.p_0, self.p_plus1], dtype=float)

    @property
    def support(self) -> np.ndarray:
        return np.array([-1.0, 0.0, 1.0])

    def expectation(self) -> float:
        return float(self.p_plus1 - self.p_minus1)

    def variance(self) -> float:
        return float(self.p_plus1 + self.p_minus1 - self.expectation() ** 2)

    def mode(self) -> int:
        """Most probable effect; ties go to 0, then to the smaller magnitude order -1, +1."""
        order = (1, 0, 2)  # 0 first, then -1, then +1
        best = max(order, key=lambda i: (self.probs[i], -order.index(i)))
        return int(best - 1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.cumsum(self.probs)
        return np.where(x < -1, 0.0, np.where(x < 0, cum[0], np.where(x < 1, cum[1], 1.0)))

    def to_dict(self) -> dict:
        return {"kind": "discrete", "p_minus1": float(self.p_minus1), "p_0": float(self.p_0),
                "p_plus1": float(self.p_plus1)}


@dataclass(frozen=True)
class Degenerate:
    value: float

    def expectation(self) -> float:
        return float(self.value)

    def variance(self) -> float:
        return 0.0

    def mode(self) -> float:
        return float(self.value)

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.value).astype(float)

    def to_dict(self) -> dict:
        return {"kind": "degenerate", "value": float(self.value)}


CwceDistribution = Union[Gaussian, Grid, Discrete, Degenerate]


def distribution_from_dict(data: dict) -> CwceDistribution:
    kind = data.get("kind")
    if kind == "gaussian":
        return Gaussian(float(data["mean"]), float(data["var"]))
    if kind == "grid":
        return Grid(np.array(data["points"], dtype=float), np.array(data["density"], dtype=float))
    if kind == "discrete":
        return Discrete(float(data["p_minus1"]), float(data["p_0"]), float(data["p_plus1"]))
    if kind == "degenerate":
        return Degenerate(float(data["value"]))
    raise ParameterError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class CrossWorldJoint:
    """Joint law of the two potential outcomes ``(Y^a, Y^0)`` at one time.

    ``pmf[i, j] = P(D^a = i, D^0 = j)`` for the truncated model; ``mvn`` holds
    the bivariate Gaussian of the underlying continuous outcomes.
    """

    mvn: gauss.MvnDist
    pmf: np.ndarray | None = None


@dataclass(frozen=True)
class GridSpec:
    """Grid for numerically evaluated densities.

    The grid spans the ``tail`` and ``1 - tail`` quantiles of the effect,
    unless explicit ``lower``/``upper`` bounds are given.
    """

    n_points: int = 512
    tail: float = 1e-7
    lower: float | None = None
    upper: float | None = None
    n_nodes: int = 2001


# ---------------------------------------------------------------------------
# posterior of the latent factors


def _log_scale(params: ScmParams, y: np.ndarray) -> np.ndarray:
    if params.kind is ScmKind.LOGNORMAL:
        if np.any(y <= 0):
            raise ParameterError("log-normal outcomes must be positive")
        return np.log(y)
    return y


def posterior_latents(history: History, params: ScmParams) -> gauss.MvnDist:
    """Gaussian law of ``(U0, U1, U2)`` given the observed history."""
    if params.kind is ScmKind.CROSSOVER:
        raise UnsupportedError("the crossover model has no mixed-model posterior")
    if history.h == 0:
        return gauss.MvnDist(np.zeros(3), params.latent_cov)
    joint = gauss.build_marginal_moments(params, history)
    obs = np.flatnonzero(history.observed)
    y = _log_scale(params, history.y[obs]) if obs.size else np.empty(0)
    post = gauss.condition_gaussian(joint, 3 + obs, y)
    return post.marginal([0, 1, 2])


def _lags(seq: np.ndarray, k: int) -> np.ndarray:
    return np.array([float(seq[k - 2]) if k >= 2 else 0.0, float(seq[k - 3]) if k >= 3 else 0.0])


@dataclass(frozen=True)
class _AffineWorlds:
    """``(Y^a, Y^0) = offset + coef @ V`` on the linear-predictor scale, ``V ~ base``."""

    offset: np.ndarray
    coef: np.ndarray
    base: gauss.MvnDist
    shift: float          # a_{k-1} beta_1 + a_{k-2} beta_2
    effect_coef: np.ndarray  # coefficients of the random part of Y^a - Y^0

    def joint(self) -> gauss.MvnDist:
        return self.base.linear(self.coef, self.offset)


def _prepare(history: History, params: ScmParams, k: int, regime, c_prev: float | None):
    if k < 1:
        raise DimensionError("time points start at 1")
    regime = as_regime(regime, k)
    x = np.concatenate([[0.0], _lags(regime, k)])
    shift = float(x[1] * params.beta1 + x[2] * params.beta2)
    return regime, x, shift


def _affine_worlds(history: History, params: ScmParams, k: int, regime,
                   c_prev: float | None = None) -> _AffineWorlds:
    regime, x, shift = _prepare(history, params, k, regime, c_prev)
    post = posterior_latents(history, params)
    if k <= history.h and history.observed[k - 1]:
        # the outcome noise at k is pinned down by U and the observed outcome
        fx = np.concatenate([[0.0], _lags(history.a, k)])
        f_shift = float(fx[1] * params.beta1 + fx[2] * params.beta2)
        y_k = float(_log_scale(params, history.y[k - 1:k])[0])
        offset = np.array([y_k + shift - f_shift, y_k - f_shift])
        coef = np.vstack([x - fx, -fx])
        return _AffineWorlds(offset, coef, post, shift, x)
    if k <= history.h:
        c_prev = float(history.c[k - 2]) if k >= 2 else 0.0
    elif c_prev is None:
        if k - 1 > history.h:
            raise ParameterError(f"time {k} needs the confounder C_{k - 1}, which lies beyond the history")
        c_prev = float(history.c[k - 2]) if k >= 2 else 0.0
    base_mean = params.mu + c_prev * params.beta_c
    e0 = np.array([1.0, 0.0, 0.0])
    mean = np.concatenate([post.mean, [0.0]])
    cov = np.zeros((4, 4))
    cov[:3, :3] = post.cov
    cov[3, 3] = params.sigma**2
    coef = np.vstack([np.concatenate([e0 + x, [1.0]]), np.concatenate([e0, [1.0]])])
    return _AffineWorlds(np.array([base_mean + shift, base_mean]), coef,
                         gauss.MvnDist(mean, cov), shift, np.concatenate([x, [0.0]]))


def _require(params: ScmParams, kind: ScmKind):
    if params.kind is not kind:
        raise UnsupportedError(f"expected a {kind.value} model, got {params.kind.value}")


# ---------------------------------------------------------------------------
# closed forms


def cwce_gaussian(history: History, params: ScmParams, k: int, regime) -> CwceDistribution:
    """Gaussian CWCE ``N(shift + x m, x P x^T)`` with ``(m, P)`` the latent posterior."""
    _require(params, ScmKind.GAUSSIAN)
    if k < 2:
        raise DimensionError("exposure effects start at time 2")
    regime, x, shift = _prepare(history, params, k, regime, None)
    if not np.any(x):
        return Degenerate(0.0)
    post = posterior_latents(history, params)
    return Gaussian(shift + float(x @ post.mean), max(float(x @ post.cov @ x), 0.0))


def cross_world_joint_truncated(history: History, params: ScmParams, k: int, regime,
                                c_prev: float | None = None) -> CrossWorldJoint:
    """Joint pmf of the threshold indicators ``(D^a, D^0)`` given the history.

    ``history.y`` must hold the continuous outcomes.
    """
    _require(params, ScmKind.TRUNCATED)
    worlds = _affine_worlds(history, params, k, regime, c_prev)
    joint = worlds.joint()
    inf, d = math.inf, params.delta
    pmf = np.empty((2, 2))
    bounds = {0: (-inf, d), 1: (d, inf)}
    for i in (0, 1):
        for j in (0, 1):
            lo = [bounds[i][0], bounds[j][0]]
            hi = [bounds[i][1], bounds[j][1]]
            pmf[i, j] = gauss.bvn_rect_prob(joint.mean, joint.cov, lo, hi)
    pmf /= pmf.sum()
    return CrossWorldJoint(joint, pmf)


def cwce_truncated(history: History, params: ScmParams, k: int, regime,
                   c_prev: float | None = None) -> Discrete:
    regime = as_regime(regime, k)
    if not np.any(_lags(regime, k)):
        return Discrete(0.0, 1.0, 0.0)
    pmf = cross_world_joint_truncated(history, params, k, regime, c_prev).pmf
    p_plus, p_minus = pmf[1, 0], pmf[0, 1]
    return Discrete(float(p_minus), float(1.0 - p_plus - p_minus), float(p_plus))


def cwce_crossover(y2: float, y3: float, a1: int) -> Degenerate:
    """Degenerate CWCE of the two-period crossover trial."""
    if a1 not in (0, 1):
        raise ParameterError("a1 must be 0 or 1")
    return Degenerate(float(y2 - y3) if a1 == 1 else float(y3 - y2))


def _lognormal_factors(worlds: _AffineWorlds):
    """Means and covariance of ``W = log Y^0`` and ``L = Y^a - Y^0 - shift``."""
    rows = np.vstack([worlds.coef[1], worlds.effect_coef])
    law = worlds.base.linear(rows, np.array([worlds.offset[1], 0.0]))
    return law.mean, law.cov


class _LogNormalEffect:
    """``D = exp(W) (exp(b + L) - 1)`` for bivariate Gaussian ``(W, L)``."""

    def __init__(self, mean, cov, b, n_nodes=2001):
        self.mw, self.ml = float(mean[0]), float(mean[1])
        self.vw, self.vl = max(float(cov[0, 0]), 0.0), max(float(cov[1, 1]), 0.0)
        self.c = float(cov[0, 1])
        self.b = b
        self.sw, self.sl = math.sqrt(self.vw), math.sqrt(self.vl)
        if self.sw > 0:
            self.slope = self.c / self.vw
            self.s_cond = math.sqrt(max(self.vl - self.c**2 / self.vw, 0.0))
            s = np.linspace(-8.5, 8.5, n_nodes)
            w = np.exp(-0.5 * s * s)
            w[[0, -1]] *= 0.5
            self.w_nodes = self.mw + self.sw * s
            self.w_weights = w / w.sum()
        else:
            self.slope, self.s_cond = 0.0, self.sl
            self.w_nodes = np.array([self.mw])
            self.w_weights = np.array([1.0])

    def degenerate_in_l(self) -> bool:
        return self.sl == 0.0

    def perfectly_correlated(self) -> bool:
        return self.sw > 0 and self.s_cond <= 1e-9 * self.sl

    def moments(self) -> tuple[float, float]:
        mw, ml, vw, vl, c, b = self.mw, self.ml, self.vw, self.vl, self.c, self.b

        def mgf(p, q):  # E exp(pW + qL)
            return math.exp(p * mw + q * ml + 0.5 * (p * p * vw + q * q * vl + 2 * p * q * c))

        m1 = math.exp(b) * mgf(1, 1) - mgf(1, 0)
        m2 = math.exp(2 * b) * mgf(2, 2) - 2 * math.exp(b) * mgf(2, 1) + mgf(2, 0)
        return m1, max(m2 - m1 * m1, 0.0)

    def value(self, w, l):
        return np.exp(w) * np.expm1(self.b + l)

    def cdf(self, d):
        """``P(D <= d)`` by quadrature over ``W`` of the conditional normal CDF of ``L``."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        w = self.w_nodes[None, :]
        arg = 1.0 + d[:, None] * np.exp(-w)
        with np.errstate(divide="ignore", invalid="ignore"):
            l_star = np.where(arg > 0, np.log(np.where(arg > 0, arg, 1.0)) - self.b, -np.inf)
        m_cond = self.ml + self.slope * (w - self.mw)
        if self.s_cond > 0:
            p = ndtr((l_star - m_cond) / self.s_cond)
        else:
            p = (l_star >= m_cond).astype(float)
        return p @ self.w_weights

    def bounds(self, radius=6.0) -> tuple[float, float]:
        """Range of ``D`` over the whitened radius-``radius`` ellipse of ``(W, L)``."""
        t = np.linspace(0.0, 2.0 * np.pi, 721)
        circle = radius * np.vstack([np.cos(t), np.sin(t)])
        cov = np.array([[self.vw, self.c], [self.c, self.vl]])
        pts = np.array([[self.mw], [self.ml]]) + gauss._psd_factor(cov) @ circle
        vals = self.value(pts[0], pts[1])
        return float(vals.min()), float(vals.max())


def _quantile(cdf, p: float, lo: float, hi: float) -> float:
    f_lo, f_hi = cdf(lo) - p, cdf(hi) - p
    if f_lo >= 0:
        return lo
    if f_hi <= 0:
        return hi
    return brentq(lambda v: cdf(v) - p, lo, hi, xtol=1e-12 * max(1.0, abs(hi - lo)), maxiter=200)


def _grid_from_cdf(cdf, lo, hi, spec: GridSpec) -> Grid:
    if spec.lower is not None and spec.upper is not None:
        a, b = spec.lower, spec.upper
    else:
        a = _quantile(lambda v: float(cdf(v)[0]), spec.tail, lo, hi)
        b = _quantile(lambda v: float(cdf(v)[0]), 1.0 - spec.tail, lo, hi)
    if not b > a:
        return None
    points = np.linspace(a, b, spec.n_points)
    step = points[1] - points[0]
    edges = np.concatenate([[points[0] - 0.5 * step], points + 0.5 * step])
    cum = cdf(edges)
    dens = np.clip(np.diff(cum), 0.0, None) / step
    return Grid.normalized(points, dens)


def _lognormal_density(eff: _LogNormalEffect, spec: GridSpec) -> CwceDistribution:
    if eff.degenerate_in_l():
        kappa = math.expm1(eff.b + eff.ml)
        if kappa == 0.0 or eff.sw == 0.0:
            return Degenerate(kappa * math.exp(eff.mw))
    elif eff.perfectly_correlated():
        return _perfect_correlation_density(eff, spec)
    lo, hi = eff.bounds()
    grid = _grid_from_cdf(eff.cdf, lo, hi, spec)
    if grid is None:
        return Degenerate(0.5 * (lo + hi))
    return grid


def _perfect_correlation_density(eff: _LogNormalEffect, spec: GridSpec) -> CwceDistribution:
    # (W, L) lie on a line: both are affine in one standard normal s
    s = np.linspace(-8.5, 8.5, 400001)
    w = eff.mw + eff.sw * s
    l = eff.ml + (eff.c / eff.sw) * s
    vals = eff.value(w, l)
    mass = np.exp(-0.5 * s * s)
    mass /= mass.sum()
    order = np.argsort(vals)
    cum = np.cumsum(mass[order])
    sorted_vals = vals[order]

    def cdf(d):
        d = np.atleast_1d(np.asarray(d, dtype=float))
        idx = np.searchsorted(sorted_vals, d, side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    grid = _grid_from_cdf(cdf, float(sorted_vals[0]), float(sorted_vals[-1]), spec)
    if grid is None:
        return Degenerate(float(np.dot(mass, vals)))
    return grid


def cwce_lognormal(history: History, params: ScmParams, k: int, regime,
                   grid_spec: GridSpec | None = None, c_prev: float | None = None,
                   allow_future: bool = False) -> CwceDistribution:
    """CWCE on the scale ``Z = exp(Y)``, tabulated on a grid.

    The effect is ``exp(W) (exp(b + L) - 1)`` with ``W`` the log potential
    outcome without exposure and ``L`` the random part of the log effect.
    Times beyond the history integrate the unrealized outcome noise as an
    extra Gaussian dimension and must be requested with ``allow_future``.
    """
    _require(params, ScmKind.LOGNORMAL)
    spec = grid_spec or GridSpec()
    regime = as_regime(regime, k)
    if not np.any(_lags(regime, k)):
        return Degenerate(0.0)
    if k > history.h and not allow_future:
        raise UnsupportedError(f"time {k} lies beyond the history (h = {history.h}); pass allow_future=True")
    worlds = _affine_worlds(history, params, k, regime, c_prev)
    mean, cov = _lognormal_factors(worlds)
    eff = _LogNormalEffect(mean, cov, worlds.shift, spec.n_nodes)
    return _lognormal_density(eff, spec)


def lognormal_cwce_moments(history: History, params: ScmParams, k: int, regime,
                           c_prev: float | None = None) -> tuple[float, float]:
    """Exact mean and variance of the log-normal CWCE."""
    _require(params, ScmKind.LOGNORMAL)
    worlds = _affine_worlds(history, params, k, regime, c_prev)
    mean, cov = _lognormal_factors(worlds)
    return _LogNormalEffect(mean, cov, worlds.shift, 3).moments()


def cwce(history: History, params: ScmParams, k: int, regime, **kwargs) -> CwceDistribution:
    """Dispatch to the closed form for ``params.kind``."""
    if params.kind is ScmKind.GAUSSIAN:
        return cwce_gaussian(history, params, k, regime)
    if params.kind is ScmKind.LOGNORMAL:
        return cwce_lognormal(history, params, k, regime, **kwargs)
    if params.kind is ScmKind.TRUNCATED:
        return cwce_truncated(history, params, k, regime, **kwargs)
    if history.h < 3:
        raise DimensionError("crossover histories have three time points")
    return cwce_crossover(history.y[1], history.y[2], int(history.a[0]))


# ---------------------------------------------------------------------------
# counterfactual prediction


def predict_potential_outcome(history: History, params: ScmParams, k: int, regime,
                              grid_spec: GridSpec | None = None,
                              c_prev: float | None = None) -> CwceDistribution:
    """Law of the single-world potential outcome ``Y_k^a`` given the history.

    Gaussian for the Gaussian model, a tabulated log-normal density for the
    log-normal model, and the Bernoulli law of ``D`` (as a distribution on
    ``{0, 1}`` encoded in :class:`Discrete`) for the truncated model.
    """
    if params.kind is ScmKind.CROSSOVER:
        raise UnsupportedError("prediction is defined for the mixed-model kinds")
    worlds = _affine_worlds(history, params, k, regime, c_prev)
    law = worlds.base.linear(worlds.coef[:1], worlds.offset[:1])
    mean, var = float(law.mean[0]), max(float(law.cov[0, 0]), 0.0)
    if params.kind is ScmKind.GAUSSIAN:
        return Gaussian(mean, var) if var > 0 else Degenerate(mean)
    if params.kind is ScmKind.TRUNCATED:
        p = float(mean > params.delta) if var == 0 else float(ndtr((mean - params.delta) / math.sqrt(var)))
        return Discrete(0.0, 1.0 - p, p)
    if var == 0:
        return Degenerate(math.exp(mean))
    spec = grid_spec or GridSpec()
    sd = math.sqrt(var)
    z = 5.199337582192817  # standard normal 1e-7 upper quantile
    points = np.exp(np.linspace(mean - z * sd, mean + z * sd, spec.n_points))
    points = np.linspace(points[0], points[-1], spec.n_points)
    dens = np.exp(-0.5 * ((np.log(points) - mean) / sd) ** 2) / (points * sd * _SQRT_2PI)
    return Grid.normalized(points, dens)


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


@dataclass(frozen=True)
class MonteCarloCwce:
    samples: np.ndarray
    distribution: CwceDistribution
    y_a: np.ndarray = field(repr=False, default=None)
    y_0: np.ndarray = field(repr=False, default=None)

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def var(self) -> float:
        return float(self.samples.var(ddof=1))


def _information_posterior(history: History, params: ScmParams):
    """Latent posterior by the information (precision) form, used only by the oracle."""
    sig = params.latent_cov
    if history.h == 0:
        return np.zeros(3), sig
    design = gauss.design_matrices(params, history.a, history.c)
    obs = history.observed
    z = design.z[obs]
    resid = _log_scale(params, history.y[obs]) - design.mu_y[obs]
    if params.sigma > 0 and np.linalg.matrix_rank(sig) == 3:
        precision = np.linalg.inv(sig) + z.T @ z / params.sigma**2
        cov = np.linalg.inv(precision)
        mean = cov @ z.T @ resid / params.sigma**2
        return mean, 0.5 * (cov + cov.T)
    # singular prior or noiseless outcomes: fall back to Schur conditioning
    post = posterior_latents(history, params)
    return post.mean, post.cov


def cwce_monte_carlo(history: History, params: ScmParams, k: int, regime, n_draws: int,
                     seed: int, c_prev: float | None = None, bins: int = 200) -> MonteCarloCwce:
    """Literal sampler of the cross-world effect.

    Draws ``U`` from its posterior, recovers the outcome noise at ``k`` from the
    observed outcome when ``k`` lies inside the history (fresh noise
    otherwise), replays both potential outcomes and takes the difference.
    """
    if params.kind is ScmKind.CROSSOVER:
        raise UnsupportedError("the Monte-Carlo oracle covers the mixed-model kinds")
    n_draws = int(n_draws)
    if n_draws < 1:
        raise ParameterError("n_draws must be positive")
    regime = as_regime(regime, k)
    mean, cov = _information_posterior(history, params)
    z = rng.normals(seed, 0, 4 * n_draws).reshape(n_draws, 4)
    u = mean + z[:, :3] @ gauss._psd_factor(cov).T
    if k <= history.h and history.observed[k - 1]:
        design = gauss.design_matrices(params, history.a, history.c)
        y_k = _log_scale(params, history.y[k - 1:k])[0]
        noise = y_k - design.mu_y[k - 1] - u @ design.z[k - 1]
        c_prev_k = float(history.c[k - 2]) if k >= 2 else 0.0
    else:
        noise = params.sigma * z[:, 3]
        if k <= history.h or c_prev is None:
            if k - 1 > history.h:
                raise ParameterError(f"time {k} needs the confounder C_{k - 1}")
            c_prev_k = float(history.c[k - 2]) if k >= 2 else 0.0
        else:
            c_prev_k = float(c_prev)
    a1 = float(regime[k - 2]) if k >= 2 else 0.0
    a2 = float(regime[k - 3]) if k >= 3 else 0.0
    y_a = observe(params, lmm_linear(params, u[:, 0], u[:, 1], u[:, 2], c_prev_k, a1, a2, noise))
    y_0 = observe(params, lmm_linear(params, u[:, 0], u[:, 1], u[:, 2], c_prev_k, 0.0, 0.0, noise))
    diff = y_a - y_0
    if params.kind is ScmKind.TRUNCATED:
        dist = Discrete(*(np.array([np.mean(diff == -1), np.mean(diff == 0), np.mean(diff == 1)])))
    elif np.ptp(diff) == 0:
        dist = Degenerate(float(diff[0]))
    else:
        dens, edges = np.histogram(diff, bins=bins, density=True)
        dist = Grid.normalized(0.5 * (edges[1:] + edges[:-1]), dens)
    return MonteCarloCwce(diff, dist, y_a, y_0)
