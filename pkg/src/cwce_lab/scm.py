"""Structural causal models for repeated exposures with receptiveness factors.

Four data-generating mechanisms are supported:

* ``crossover``: the ideal two-period crossover trial without noise.
* ``gaussian_lmm``: the Gaussian linear mixed assignment,
  ``Y_k = mu + U0 + C_{k-1} beta_C + A_{k-1}(beta_1 + U1) + A_{k-2}(beta_2 + U2) + N_k``
  with logistic exposure assignment driven by the current outcome.
* ``lognormal_lmm``: the same mechanism observed on the scale ``Z = exp(Y)``.
* ``truncated_lmm``: the same mechanism observed through ``D = 1{Y > delta}``
  (the continuous ``Y`` is kept as well).

Panels keep the ground-truth latents and noises so that potential outcomes
and individual causal effects can be evaluated exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit, ndtr, ndtri

from . import rng
from .errors import DimensionError, ParameterError, UnsupportedError


class ScmKind(str, enum.Enum):
    CROSSOVER = "crossover"
    GAUSSIAN = "gaussian_lmm"
    LOGNORMAL = "lognormal_lmm"
    TRUNCATED = "truncated_lmm"


class Measure(str, enum.Enum):
    ACE = "ACE"
    CACE = "CACE"


_IDENTITY3 = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class ScmParams:
    kind: ScmKind
    mu: float
    beta1: float
    beta2: float
    beta_c: float
    alpha0: float
    alpha1: float
    alpha2: float
    alpha3: float
    tau0: float
    tau1: float
    tau2: float
    sigma: float
    latent_corr: tuple = _IDENTITY3
    confounder_law: tuple = ((0.0, 1.0),)
    delta: float = 120.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScmKind(self.kind))
        corr = tuple(tuple(float(v) for v in row) for row in self.latent_corr)
        law = tuple((float(v), float(p)) for v, p in self.confounder_law)
        object.__setattr__(self, "latent_corr", corr)
        object.__setattr__(self, "confounder_law", law)
        for name in ("mu", "beta1", "beta2", "beta_c", "alpha0", "alpha1",
                     "alpha2", "alpha3", "tau0", "tau1", "tau2", "sigma", "delta"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        for name in ("tau0", "tau1", "tau2", "sigma"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if not law:
            raise ParameterError("confounder_law is empty")
        values = np.array([v for v, _ in law])
        probs = np.array([p for _, p in law])
        if not np.all(np.isfinite(values)) or np.any(probs < 0):
            raise ParameterError("confounder_law needs finite values and nonnegative probabilities")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ParameterError(f"confounder_law probabilities sum to {probs.sum()!r}, not 1")
        r = np.array(corr)
        if r.shape != (3, 3):
            raise ParameterError("latent_corr must be 3x3")
        if not np.allclose(r, r.T, atol=1e-12, rtol=0):
            raise ParameterError("latent_corr must be symmetric")
        if np.any(np.abs(np.diag(r) - 1.0) > 1e-12):
            raise ParameterError("latent_corr must have a unit diagonal")
        if np.linalg.eigvalsh(r).min() < -1e-10:
            raise ParameterError("latent_corr must be positive semidefinite")

    # default parameter sets ------------------------------------------------
    @classmethod
    def gaussian_lmm(cls, **overrides) -> "ScmParams":
        base = dict(kind=ScmKind.GAUSSIAN, mu=120.0, beta1=-10.0, beta2=-5.0, beta_c=5.0,
                    alpha0=-3.0, alpha1=0.05, alpha2=1.0, alpha3=0.7,
                    tau0=5.0, tau1=10.0, tau2=5.0, sigma=1.0,
                    confounder_law=((0.7, 0.3), (-0.3, 0.7)), delta=120.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def truncated_lmm(cls, **overrides) -> "ScmParams":
        overrides.setdefault("kind", ScmKind.TRUNCATED)
        return cls.gaussian_lmm(**overrides)

    @classmethod
    def lognormal_lmm(cls, **overrides) -> "ScmParams":
        base = dict(kind=ScmKind.LOGNORMAL, mu=0.0, beta1=-0.2, beta2=-0.1, beta_c=4.0,
                    alpha0=-0.5, alpha1=0.01, alpha2=1.0, alpha3=0.7,
                    tau0=0.25, tau1=0.5, tau2=0.25, sigma=0.25,
                    confounder_law=((0.5, 0.5), (-0.5, 0.5)), delta=0.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def crossover(cls, **overrides) -> "ScmParams":
        # beta1 is the mean of the receptiveness factor U_AY, alpha0 the logit of P(A_1 = 1)
        base = dict(kind=ScmKind.CROSSOVER, mu=120.0, beta1=0.0, beta2=0.0, beta_c=0.0,
                    alpha0=0.0, alpha1=0.0, alpha2=0.0, alpha3=0.0,
                    tau0=5.0, tau1=10.0, tau2=0.0, sigma=0.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def default_for(cls, kind) -> "ScmParams":
        return {
            ScmKind.CROSSOVER: cls.crossover,
            ScmKind.GAUSSIAN: cls.gaussian_lmm,
            ScmKind.LOGNORMAL: cls.lognormal_lmm,
            ScmKind.TRUNCATED: cls.truncated_lmm,
        }[ScmKind(kind)]()

    # derived quantities ----------------------------------------------------
    @property
    def taus(self) -> np.ndarray:
        return np.array([self.tau0, self.tau1, self.tau2])

    @property
    def latent_cov(self) -> np.ndarray:
        t = self.taus
        return np.array(self.latent_corr) * np.outer(t, t)

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2])

    def latent_factor(self) -> np.ndarray:
        """Matrix ``L`` with ``L @ L.T == latent_cov`` (works for singular covariances)."""
        r = np.array(self.latent_corr)
        try:
            lr = np.linalg.cholesky(r)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(r)
            lr = v * np.sqrt(np.clip(w, 0.0, None))
        return self.taus[:, None] * lr

    def confounder_values(self) -> tuple[np.ndarray, np.ndarray]:
        vals = np.array([v for v, _ in self.confounder_law])
        probs = np.array([p for _, p in self.confounder_law])
        return vals, probs

    def with_kind(self, kind) -> "ScmParams":
        return replace(self, kind=ScmKind(kind))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            **{name: getattr(self, name) for name in (
                "mu", "beta1", "beta2", "beta_c", "alpha0", "alpha1", "alpha2", "alpha3",
                "tau0", "tau1", "tau2", "sigma", "delta")},
            "latent_corr": [list(row) for row in self.latent_corr],
            "confounder_law": [list(pair) for pair in self.confounder_law],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScmParams":
        data = dict(data)
        if "latent_corr" in data:
            data["latent_corr"] = tuple(tuple(r) for r in data["latent_corr"])
        if "confounder_law" in data:
            data["confounder_law"] = tuple(tuple(p) for p in data["confounder_law"])
        return cls(**data)


def zero_regime(length: int) -> np.ndarray:
    return np.zeros(int(length), dtype=np.int8)


def as_regime(regime: Sequence[int], k: int | None = None) -> np.ndarray:
    a = np.asarray(regime, dtype=np.int8).reshape(-1)
    if np.any((a != 0) & (a != 1)):
        raise ParameterError("exposure regimes take values in {0, 1}")
    if k is not None and a.size < k - 1:
        raise DimensionError(f"regime of length {a.size} cannot reach time {k} (needs {k - 1})")
    return a


def _lags(a: np.ndarray, k: int) -> tuple:
    """Exposures at k-1 and k-2 (1-based times); zero before the first time point."""
    a1 = a[..., k - 2] if k >= 2 else np.zeros(a.shape[:-1], dtype=a.dtype)
    a2 = a[..., k - 3] if k >= 3 else np.zeros(a.shape[:-1], dtype=a.dtype)
    return a1, a2


def lmm_linear(params: ScmParams, u0, u1, u2, c_prev, a_lag1, a_lag2, noise):
    """Log-scale outcome of the linear mixed assignment.

    Shared by the simulator and the potential-outcome evaluator so that the
    factual outcome and the potential outcome under the factual regime are
    produced by the same floating-point operations.
    """
    return (params.mu + u0 + c_prev * params.beta_c
            + a_lag1 * (params.beta1 + u1) + a_lag2 * (params.beta2 + u2) + noise)


def observe(params: ScmParams, y_lin):
    """Map the linear predictor to the observed scale of ``params.kind``."""
    if params.kind is ScmKind.LOGNORMAL:
        return np.exp(y_lin)
    if params.kind is ScmKind.TRUNCATED:
        return (y_lin > params.delta).astype(np.float64)
    return y_lin


# ---------------------------------------------------------------------------
# panels


@dataclass
class Individual:
    u0: float
    u1: float
    u2: float
    noise_y: np.ndarray
    noise_a: np.ndarray
    c: np.ndarray
    a: np.ndarray
    y: np.ndarray
    d: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.y.shape[0]


@dataclass
class History:
    """Observed record of one individual up to time ``h``.

    ``y`` is on the observed scale of the model (``Z`` for the log-normal
    model, the continuous outcome for the truncated model).  ``observed``
    flags which outcomes were measured; the crossover trial does not measure
    the baseline outcome.
    """

    a: np.ndarray
    c: np.ndarray
    y: np.ndarray
    observed: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int8).reshape(-1)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (self.a.size == self.c.size == self.y.size):
            raise DimensionError("history arrays must have equal length")
        if self.observed is None:
            self.observed = np.ones(self.y.size, dtype=bool)
        else:
            self.observed = np.asarray(self.observed, dtype=bool).reshape(-1)
            if self.observed.size != self.y.size:
                raise DimensionError("observed mask has the wrong length")

    @property
    def h(self) -> int:
        return self.y.size

    def truncate(self, h: int) -> "History":
        if h > self.h:
            raise DimensionError(f"history has only {self.h} time points")
        return History(self.a[:h], self.c[:h], self.y[:h], self.observed[:h])


@dataclass
class Panel:
    """Simulated cohort; row ``i`` of every array belongs to individual ``i``."""

    params: ScmParams
    seed: int
    u: np.ndarray
    noise_y: np.ndarray
    noise_a: np.ndarray
    c: np.ndarray
    a: np.ndarray
    y: np.ndarray
    d: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(self.y.shape[0])

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Individual:
        return Individual(
            u0=float(self.u[i, 0]), u1=float(self.u[i, 1]), u2=float(self.u[i, 2]),
            noise_y=self.noise_y[i], noise_a=self.noise_a[i], c=self.c[i], a=self.a[i],
            y=self.y[i], d=None if self.d is None else self.d[i])

    def __iter__(self) -> Iterator[Individual]:
        for i in range(self.n):
            yield self[i]

    @property
    def individuals(self) -> list[Individual]:
        return list(self)

    def subset(self, n: int | None = None, m: int | None = None) -> "Panel":
        n = self.n if n is None else int(n)
        m = self.m if m is None else int(m)
        if n > self.n or m > self.m or n < 1 or m < 1:
            raise DimensionError(f"subset ({n}, {m}) exceeds panel ({self.n}, {self.m})")
        return Panel(self.params, self.seed, self.u[:n], self.noise_y[:n, :m], self.noise_a[:n, :m],
                     self.c[:n, :m], self.a[:n, :m], self.y[:n, :m],
                     None if self.d is None else self.d[:n, :m], self.ids[:n])

    def select(self, index) -> "Panel":
        index = np.asarray(index)
        return Panel(self.params, self.seed, self.u[index], self.noise_y[index], self.noise_a[index],
                     self.c[index], self.a[index], self.y[index],
                     None if self.d is None else self.d[index], self.ids[index])

    def history(self, i: int, h: int | None = None) -> History:
        h = self.m if h is None else int(h)
        if h > self.m:
            raise DimensionError(f"panel has only {self.m} time points")
        observed = np.ones(h, dtype=bool)
        if self.params.kind is ScmKind.CROSSOVER:
            observed[0] = False
        return History(self.a[i, :h], self.c[i, :h], self.y[i, :h], observed)

    def log_outcomes(self) -> np.ndarray:
        """Outcomes on the scale of the linear mixed model."""
        if self.params.kind is ScmKind.LOGNORMAL:
            return np.log(self.y)
        return self.y


def _draw_confounders(params: ScmParams, u: np.ndarray) -> np.ndarray:
    vals, probs = params.confounder_values()
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, u, side="right")
    return vals[np.minimum(idx, vals.size - 1)]


def _stream_block(seed: int, n: int, m: int) -> np.ndarray:
    """Uniforms laid out as ``[z0, z1, z2, (n_y, u_a, u_c) for each time]``.

    The per-time interleaving makes the first ``m`` repeats of a longer panel
    identical to a panel simulated with ``m`` repeats.
    """
    size = 3 + 3 * m
    out = np.empty((n, size))
    for i in range(n):
        out[i] = rng.uniforms(seed, i, size)
    return out


def simulate_panel(params: ScmParams, n: int, m: int, seed: int) -> Panel:
    """Simulate ``n`` individuals with ``m`` repeats from ``params``.

    Each individual reads its own counter-based stream keyed by
    ``(seed, individual index)``; see :mod:`cwce_lab.rng`.
    """
    n, m = int(n), int(m)
    if n < 1:
        raise ParameterError("n must be at least 1")
    if params.kind is ScmKind.CROSSOVER:
        if m != 3:
            raise ParameterError("the crossover design has exactly m = 3 time points")
    elif m < 3:
        raise ParameterError("mixed-model panels need m >= 3")

    block = _stream_block(seed, n, m)
    z = ndtri(block[:, :3])
    per_time = block[:, 3:].reshape(n, m, 3)
    u = z @ params.latent_factor().T
    noise_y = params.sigma * ndtri(per_time[:, :, 0])
    noise_a = per_time[:, :, 1]
    c = _draw_confounders(params, per_time[:, :, 2])
    a = np.zeros((n, m), dtype=np.int8)

    if params.kind is ScmKind.CROSSOVER:
        return _simulate_crossover(params, seed, u, noise_a, c)

    y_lin = np.empty((n, m))
    zeros = np.zeros(n)
    for j in range(m):
        k = j + 1
        a1 = a[:, j - 1] if k >= 2 else np.zeros(n, dtype=np.int8)
        a2 = a[:, j - 2] if k >= 3 else np.zeros(n, dtype=np.int8)
        c_prev = c[:, j - 1] if k >= 2 else zeros
        y_lin[:, j] = lmm_linear(params, u[:, 0], u[:, 1], u[:, 2], c_prev, a1, a2, noise_y[:, j])
        logit = params.alpha0 + params.alpha1 * y_lin[:, j] + params.alpha3 * c[:, j]
        if k >= 2:
            logit = logit + params.alpha2 * a1
        a[:, j] = (expit(logit) > noise_a[:, j]).astype(np.int8)

    d = None
    if params.kind is ScmKind.LOGNORMAL:
        y = np.exp(y_lin)
    elif params.kind is ScmKind.TRUNCATED:
        y = y_lin
        d = (y_lin > params.delta).astype(np.float64)
    else:
        y = y_lin
    return Panel(params, int(seed), u, noise_y, noise_a, c, a, y, d)


_DYADIC = 2.0**-32


def _dyadic(x):
    return np.round(x / _DYADIC) * _DYADIC


def _simulate_crossover(params, seed, u, noise_a, c):
    n = u.shape[0]
    a = np.zeros((n, 3), dtype=np.int8)
    a[:, 0] = (expit(params.alpha0) > noise_a[:, 0]).astype(np.int8)
    a[:, 1] = 1 - a[:, 0]
    y = np.empty((n, 3))
    # Baseline and receptiveness are rounded to multiples of 2**-32 so that
    # every outcome is exactly representable and y2 - y3 reproduces U_AY
    # without rounding error (the perturbation is below 1e-9).
    y1 = _dyadic(params.mu + u[:, 0])
    u_ay = _dyadic(params.beta1 + u[:, 1])
    u = u.copy()
    u[:, 0] = y1 - params.mu
    u[:, 1] = u_ay
    y[:, 0] = y1
    y[:, 1] = y1 + u_ay * a[:, 0]
    y[:, 2] = y1 + u_ay * a[:, 1]
    return Panel(params, int(seed), u, np.zeros((n, 3)), noise_a, np.zeros((n, 3)), a, y, None)


# ---------------------------------------------------------------------------
# potential outcomes and effect measures


def _po_arrays(params: ScmParams, u, noise_y, c, y, regime: np.ndarray, k: int):
    """Vectorized potential outcome ``Y_k^regime`` for rows of latents/noises."""
    m = y.shape[1]
    if not 1 <= k <= m:
        raise DimensionError(f"time {k} outside 1..{m}")
    regime = as_regime(regime, k)
    a1 = int(regime[k - 2]) if k >= 2 else 0
    a2 = int(regime[k - 3]) if k >= 3 else 0
    if params.kind is ScmKind.CROSSOVER:
        y1 = y[:, 0]
        if k == 1:
            return y1
        return y1 + u[:, 1] * a1
    c_prev = c[:, k - 2] if k >= 2 else np.zeros(u.shape[0])
    a1v = np.full(u.shape[0], a1, dtype=np.int8)
    a2v = np.full(u.shape[0], a2, dtype=np.int8)
    lin = lmm_linear(params, u[:, 0], u[:, 1], u[:, 2], c_prev, a1v, a2v, noise_y[:, k - 1])
    return observe(params, lin)


def potential_outcomes(panel: Panel, regime, k: int) -> np.ndarray:
    """``Y_k^regime`` for every individual of ``panel`` (observed scale)."""
    return _po_arrays(panel.params, panel.u, panel.noise_y, panel.c, panel.y, regime, k)


def _one_row(ind: Individual):
    u = np.array([[ind.u0, ind.u1, ind.u2]])
    return u, ind.noise_y[None, :], ind.c[None, :], ind.y[None, :]


def potential_outcome(ind: Individual, params: ScmParams, regime, k: int) -> float:
    """Replay the outcome assignment of ``ind`` at time ``k`` under ``regime``.

    Log-normal models return ``exp(Y)``, truncated models the indicator
    ``1{Y > delta}``.
    """
    u, noise_y, c, y = _one_row(ind)
    return float(_po_arrays(params, u, noise_y, c, y, regime, k)[0])


def true_ices(panel: Panel, regime, k: int) -> np.ndarray:
    regime = as_regime(regime, k)
    return potential_outcomes(panel, regime, k) - potential_outcomes(panel, zero_regime(regime.size), k)


def true_ice(ind: Individual, params: ScmParams, regime, k: int) -> float:
    regime = as_regime(regime, k)
    return (potential_outcome(ind, params, regime, k)
            - potential_outcome(ind, params, zero_regime(regime.size), k))


def _regime_lags(regime, k):
    regime = as_regime(regime, k)
    a1 = float(regime[k - 2]) if k >= 2 else 0.0
    a2 = float(regime[k - 3]) if k >= 3 else 0.0
    return a1, a2


def _eice_arrays(params: ScmParams, u, c_prev, regime, k):
    a1, a2 = _regime_lags(regime, k)
    effect = a1 * (params.beta1 + u[:, 1]) + a2 * (params.beta2 + u[:, 2])
    if params.kind is ScmKind.CROSSOVER:
        return a1 * u[:, 1]
    if params.kind is ScmKind.GAUSSIAN:
        return effect
    base = params.mu + u[:, 0] + c_prev * params.beta_c
    if params.kind is ScmKind.LOGNORMAL:
        return np.exp(base) * np.expm1(effect) * np.exp(0.5 * params.sigma**2)
    # truncated: difference of exceedance probabilities given the latents
    if params.sigma == 0.0:
        return (base + effect > params.delta).astype(float) - (base > params.delta).astype(float)
    s = params.sigma
    return ndtr((params.delta - base) / s) - ndtr((params.delta - base - effect) / s)


def true_eice(ind: Individual, params: ScmParams, regime, k: int, c_value: float | None = None) -> float:
    """ICE averaged over the time-specific outcome noise.

    ``c_value`` overrides the confounder ``C_{k-1}``; by default the
    individual's own value is used.
    """
    if c_value is None:
        c_value = float(ind.c[k - 2]) if k >= 2 else 0.0
    u = np.array([[ind.u0, ind.u1, ind.u2]])
    return float(_eice_arrays(params, u, np.array([c_value]), regime, k)[0])


def true_eices(panel: Panel, regime, k: int) -> np.ndarray:
    c_prev = panel.c[:, k - 2] if k >= 2 else np.zeros(panel.n)
    return _eice_arrays(panel.params, panel.u, c_prev, regime, k)


def _cace(params: ScmParams, regime, k: int, c: float) -> float:
    a1, a2 = _regime_lags(regime, k)
    x = np.array([0.0, a1, a2])
    cov = params.latent_cov
    shift = a1 * params.beta1 + a2 * params.beta2
    if params.kind is ScmKind.GAUSSIAN:
        return shift
    base = params.mu + c * params.beta_c
    if params.kind is ScmKind.LOGNORMAL:
        e0 = np.array([1.0, 0.0, 0.0])
        v_a = (e0 + x) @ cov @ (e0 + x)
        v_0 = cov[0, 0]
        return float(np.exp(base + 0.5 * params.sigma**2)
                     * (np.exp(shift + 0.5 * v_a) - np.exp(0.5 * v_0)))
    # truncated: risk difference P(Y^a > delta) - P(Y^0 > delta)
    e0 = np.array([1.0, 0.0, 0.0])
    sd_0 = np.sqrt(cov[0, 0] + params.sigma**2)
    sd_a = np.sqrt((e0 + x) @ cov @ (e0 + x) + params.sigma**2)
    return float(_upper(params.delta, base + shift, sd_a) - _upper(params.delta, base, sd_0))


def _upper(threshold, mean, sd):
    if sd == 0.0:
        return float(mean > threshold)
    return float(ndtr((mean - threshold) / sd))


def closed_form_effect(params: ScmParams, measure, regime, k: int, c_value: float | None = None) -> float:
    """Population (ACE) or confounder-conditional (CACE) causal effect.

    The ACE averages the CACE over ``params.confounder_law``, which is the
    ``C_{k-1}`` distribution.
    """
    measure = Measure(measure)
    if params.kind is ScmKind.CROSSOVER:
        if measure is Measure.CACE:
            raise UnsupportedError("the crossover model has no confounder to condition on")
        a1, _ = _regime_lags(regime, k)
        return a1 * params.beta1
    if measure is Measure.CACE:
        if c_value is None:
            raise ParameterError("CACE needs c_value")
        return _cace(params, regime, k, float(c_value))
    if params.kind is ScmKind.GAUSSIAN or k < 2:
        return _cace(params, regime, k, 0.0)
    vals, probs = params.confounder_values()
    return float(sum(p * _cace(params, regime, k, v) for v, p in zip(vals, probs)))


def marginal_ice_moments(params: ScmParams, regime, k: int) -> tuple[float, float]:
    """Mean and variance of the Gaussian-model ICE ``x . (beta + U)``."""
    a1, a2 = _regime_lags(regime, k)
    x = np.array([0.0, a1, a2])
    return float(a1 * params.beta1 + a2 * params.beta2), float(x @ params.latent_cov @ x)
