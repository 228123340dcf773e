"""Plug-in individual causal inference from a REML fit.

Estimated CWCE distributions reuse the exact computations of
:mod:`cwce_lab.cwce` with the fitted hyper-parameters in place of the truth.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .cwce import (CwceDistribution, Degenerate, Gaussian, Grid, History,
                   cwce as _cwce)
from .errors import NotConvergedError, ParameterError, UnsupportedError
from .reml import RemlFit
from .scm import Panel, ScmKind, ScmParams, as_regime, true_ices

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class DensityMode(str, enum.Enum):
    AVERAGE_DENSITY = "AverageDensity"
    KERNEL_OF_EXPECTATIONS = "KernelOfExpectations"


@dataclass(frozen=True)
class IceEstimate:
    point: float
    cwce: CwceDistribution
    expected_cwce: float


def plug_in_params(fit: RemlFit, kind=None, base: ScmParams | None = None) -> ScmParams:
    if not fit.converged:
        raise NotConvergedError(
            f"REML fit did not converge (gradient norm {fit.gradient_norm:.3g}); refusing plug-in use")
    return fit.to_scm_params(kind, base)


def estimate_cwce(fit: RemlFit, history: History, k: int, regime, kind=None,
                  base: ScmParams | None = None, **kwargs) -> CwceDistribution:
    """CWCE with fitted hyper-parameters substituted for the true ones.

    ``kind`` selects the outcome scale (the truncated model is fitted on the
    continuous outcome); ``base`` supplies the threshold and the parameters
    that the mixed model does not estimate.
    """
    return _cwce(history, plug_in_params(fit, kind, base), k, regime, **kwargs)


def map_ice(dist: CwceDistribution):
    """Mode of a CWCE distribution (discrete ties are resolved toward 0)."""
    if isinstance(dist, Grid) and dist.points.size == 0:
        raise ParameterError("empty grid")
    return dist.mode()


def expected_cwce(dist: CwceDistribution) -> float:
    return dist.expectation()


def estimate_ice(dist: CwceDistribution) -> IceEstimate:
    return IceEstimate(map_ice(dist), dist, expected_cwce(dist))


def bandwidth_nrd0(values: np.ndarray) -> float:
    """Silverman's rule of thumb ``0.9 min(sd, IQR/1.34) n^(-1/5)``, with the usual fallbacks."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ParameterError("bandwidth selection needs at least two values")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    lo = min(sd, (q75 - q25) / 1.34)
    if lo <= 0:
        lo = sd or abs(float(x[0])) or 1.0
    return 0.9 * lo * x.size ** -0.2


def _support(dist) -> tuple[float, float]:
    if isinstance(dist, Gaussian):
        return dist.mean - 8 * dist.sd, dist.mean + 8 * dist.sd
    if isinstance(dist, Degenerate):
        return dist.value - 1.0, dist.value + 1.0
    return float(dist.points[0]), float(dist.points[-1])


def marginal_ice_density(cwces: Sequence[CwceDistribution], mode=DensityMode.AVERAGE_DENSITY,
                         bandwidth: float | None = None, n_points: int = 1024,
                         points: np.ndarray | None = None) -> Grid:
    """Population ICE density from individual CWCE distributions.

    ``AverageDensity`` averages the individual densities on a common grid,
    each integrated over the cell around a grid point.
    ``KernelOfExpectations`` is a Gaussian kernel density estimate of the
    individual CWCE means, with the rule-of-thumb bandwidth unless
    ``bandwidth`` is given.
    """
    mode = DensityMode(mode)
    cwces = list(cwces)
    if len(cwces) < 2:
        raise ParameterError("at least two individuals are required")
    kinds = {type(c) for c in cwces}
    if len(kinds) > 1:
        raise ParameterError(f"mixed distribution kinds: {sorted(k.__name__ for k in kinds)}")
    if mode is DensityMode.AVERAGE_DENSITY:
        if kinds - {Gaussian, Grid, Degenerate}:
            raise UnsupportedError("average densities need continuous or point-mass distributions")
        if points is None:
            spans = np.array([_support(c) for c in cwces])
            points = np.linspace(spans[:, 0].min(), spans[:, 1].max(), n_points)
        points = np.asarray(points, dtype=float)
        # bin-averaged densities from CDF differences, so laws narrower than
        # the grid spacing still deposit their mass in the right cell
        mid = 0.5 * (points[1:] + points[:-1])
        edges = np.concatenate([[points[0] - (mid[0] - points[0])], mid, [points[-1] + (points[-1] - mid[-1])]])
        total = np.zeros(points.size)
        for c in cwces:
            total += np.diff(c.cdf(edges))
        return Grid.normalized(points, total / (len(cwces) * np.diff(edges)))
    means = np.array([c.expectation() for c in cwces])
    bw = bandwidth_nrd0(means) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise ParameterError("bandwidth must be positive")
    if points is None:
        points = np.linspace(means.min() - 8 * bw, means.max() + 8 * bw, n_points)
    dens = np.zeros_like(points, dtype=float)
    for m in means:
        dens += np.exp(-0.5 * ((points - m) / bw) ** 2)
    dens /= means.size * bw * _SQRT_2PI
    return Grid.normalized(points, dens)


def ks_distance(p: CwceDistribution, q: CwceDistribution, points: np.ndarray | None = None) -> float:
    """Kolmogorov-Smirnov distance ``sup |F_p - F_q|``.

    Exact for pairs of Gaussian laws (the supremum sits where the densities
    cross); otherwise evaluated on ``points`` or a dense grid.
    """
    if isinstance(p, Gaussian) and isinstance(q, Gaussian) and p.var > 0 and q.var > 0:
        return _ks_gaussian(p.mean, p.sd, q.mean, q.sd)
    if points is None:
        lo, hi = [], []
        for d in (p, q):
            if isinstance(d, Gaussian):
                lo.append(d.mean - 10 * d.sd)
                hi.append(d.mean + 10 * d.sd)
            elif isinstance(d, Grid):
                lo.append(d.points[0])
                hi.append(d.points[-1])
            elif isinstance(d, Degenerate):
                lo.append(d.value - 1.0)
                hi.append(d.value + 1.0)
            else:
                lo.append(-2.0)
                hi.append(2.0)
        points = np.linspace(min(lo), max(hi), 20001)
        extra = [d.value for d in (p, q) if isinstance(d, Degenerate)]
        points = np.sort(np.concatenate([points, extra, np.nextafter(extra, -np.inf)])) if extra else points
    return float(np.max(np.abs(p.cdf(points) - q.cdf(points))))


def _ks_gaussian(m1, s1, m2, s2) -> float:
    candidates = []
    if s1 == s2:
        candidates.append(0.5 * (m1 + m2))
    else:
        # log-density difference is a quadratic a x^2 + b x + c
        a = 0.5 / s2**2 - 0.5 / s1**2
        b = m1 / s1**2 - m2 / s2**2
        c = 0.5 * m2**2 / s2**2 - 0.5 * m1**2 / s1**2 + math.log(s2 / s1)
        disc = b * b - 4 * a * c
        if disc >= 0:
            r = math.sqrt(disc)
            candidates += [(-b + r) / (2 * a), (-b - r) / (2 * a)]
    x = np.array(candidates)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(ndtr((x - m1) / s1) - ndtr((x - m2) / s2))))


@dataclass(frozen=True)
class ClassificationTable:
    """Proportions with rows = true ICE and columns = estimated ICE, both in (-1, 0, +1)."""

    table: np.ndarray
    counts: np.ndarray

    @property
    def misclassification(self) -> float:
        return float(1.0 - np.trace(self.table))

    def row_normalized(self) -> np.ndarray:
        sums = self.table.sum(axis=1, keepdims=True)
        return np.divide(self.table, sums, out=np.zeros_like(self.table), where=sums > 0)


def classification_table(panel: Panel, fit: RemlFit | ScmParams, k: int, regime,
                         h: int | None = None, base: ScmParams | None = None) -> ClassificationTable:
    """Cross-tabulate the true discrete ICE against the MAP of the estimated CWCE.

    ``fit`` may be a :class:`RemlFit` (plug-in estimates) or the true
    :class:`ScmParams`.  Histories use the first ``h`` time points (all by
    default).
    """
    if panel.params.kind is not ScmKind.TRUNCATED:
        raise UnsupportedError("classification tables are defined for the truncated model")
    regime = as_regime(regime, k)
    base = base or panel.params
    params = fit if isinstance(fit, ScmParams) else plug_in_params(fit, ScmKind.TRUNCATED, base)
    if params.kind is not ScmKind.TRUNCATED:
        raise UnsupportedError("classification needs truncated-model parameters")
    h = panel.m if h is None else int(h)
    truth = np.rint(true_ices(panel, regime, k)).astype(int)
    counts = np.zeros((3, 3), dtype=np.int64)
    for i in range(panel.n):
        est = map_ice(_cwce(panel.history(i, h), params, k, regime))
        counts[truth[i] + 1, int(est) + 1] += 1
    return ClassificationTable(counts / counts.sum(), counts)
