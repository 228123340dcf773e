"""Cross-module oracle suite: closed-form CWCE against the Monte-Carlo sampler.

Each case draws perturbed model parameters, simulates one individual,
and compares the exact CWCE with a literal sampler run on the same history.
Continuous laws are compared on mean and variance in units of their Monte-Carlo
standard errors. Discrete laws are compared cell by cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .cwce import Degenerate, Discrete, cwce, cwce_crossover, cwce_monte_carlo
from .scm import ScmKind, ScmParams, simulate_panel

CASE_STREAM = 1 << 40


@dataclass(frozen=True)
class OracleCase:
    kind: ScmKind
    index: int
    params: ScmParams
    history_seed: int
    h: int
    k: int
    regime: tuple


@dataclass(frozen=True)
class OracleResult:
    case: OracleCase
    statistic: str
    exact: float
    estimate: float
    se: float
    tolerance: float

    @property
    def z(self) -> float:
        if self.se == 0:
            return 0.0 if self.exact == self.estimate else math.inf
        return abs(self.estimate - self.exact) / self.se

    @property
    def passed(self) -> bool:
        return self.z <= self.tolerance


def _random_corr(gen: np.random.Generator) -> tuple:
    if gen.random() < 0.5:
        return ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    f = gen.normal(size=(3, 3))
    cov = f @ f.T + 0.5 * np.eye(3)
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    return tuple(tuple(float(v) for v in row) for row in corr)


def random_params(kind, gen: np.random.Generator) -> ScmParams:
    """Default-scale parameters with every coefficient perturbed."""
    kind = ScmKind(kind)
    base = ScmParams.default_for(kind)
    scale = gen.uniform(0.5, 1.5, size=3)
    common = dict(latent_corr=_random_corr(gen), alpha1=base.alpha1 * gen.uniform(0.5, 1.5),
                  alpha3=base.alpha3 * gen.uniform(0.5, 1.5),
                  tau0=base.tau0 * scale[0], tau1=base.tau1 * scale[1], tau2=base.tau2 * scale[2])
    if kind is ScmKind.LOGNORMAL:
        return ScmParams.lognormal_lmm(
            mu=gen.uniform(-0.5, 0.5), beta1=gen.uniform(-0.4, 0.2), beta2=gen.uniform(-0.3, 0.1),
            beta_c=base.beta_c * gen.uniform(0.5, 1.5), sigma=gen.uniform(0.1, 0.4), **common)
    mu = 120.0 + gen.normal(0.0, 5.0)
    overrides = dict(mu=mu, beta1=gen.uniform(-15.0, -5.0), beta2=gen.uniform(-8.0, -2.0),
                     beta_c=gen.uniform(2.0, 8.0), sigma=gen.uniform(0.5, 2.0), **common)
    if kind is ScmKind.TRUNCATED:
        overrides["delta"] = mu + gen.uniform(-15.0, 15.0)
        return ScmParams.truncated_lmm(**overrides)
    return ScmParams.gaussian_lmm(**overrides)


def oracle_cases(kind, n_cases: int, seed: int) -> list[OracleCase]:
    """Reproducible random (parameters, history, regime, k) cases."""
    kind = ScmKind(kind)
    gen = rng.generator(seed, CASE_STREAM + list(ScmKind).index(kind))
    cases = []
    for i in range(n_cases):
        params = random_params(kind, gen)
        h = int(gen.integers(1, 9))
        k = int(gen.integers(2, h + 2))
        regime = gen.integers(0, 2, size=k - 1)
        if not regime[k - 2] and gen.random() < 0.9:
            regime[k - 2] = 1
        cases.append(OracleCase(kind, i, params, int(seed) * 1000 + i, h, k, tuple(int(v) for v in regime)))
    return cases


def check_case(case: OracleCase, n_draws: int = 100_000) -> list[OracleResult]:
    """Compare the exact CWCE for ``case`` with ``n_draws`` Monte-Carlo draws."""
    panel = simulate_panel(case.params, 1, max(case.h, 3), case.history_seed)
    history = panel.history(0, case.h)
    kwargs = {"allow_future": True} if case.kind is ScmKind.LOGNORMAL and case.k > case.h else {}
    exact = cwce(history, case.params, case.k, case.regime, **kwargs)
    mc = cwce_monte_carlo(history, case.params, case.k, case.regime, n_draws, case.history_seed + 7)
    s = mc.samples
    n = s.size
    if isinstance(exact, Discrete):
        out = []
        for label, p, hits in zip(("p_minus1", "p_0", "p_plus1"), exact.probs, (-1, 0, 1)):
            p_hat = float(np.mean(s == hits))
            # the binomial standard error vanishes at p = 0 or 1, so it is floored at one draw
            se = math.sqrt(max(p * (1 - p), 1.0 / n) / n)
            out.append(OracleResult(case, label, float(p), p_hat, se, 3.0))
        return out
    if isinstance(exact, Degenerate):
        dev = float(np.max(np.abs(s - exact.value)))
        estimate = exact.value if dev <= 1e-9 else exact.value + dev
        return [OracleResult(case, "value", exact.value, estimate, 0.0, 0.0)]
    mean, var = exact.expectation(), exact.variance()
    centred = s - s.mean()
    m4 = float(np.mean(centred**4))
    se_mean = math.sqrt(float(s.var(ddof=1)) / n)
    se_var = math.sqrt(max(m4 - float(s.var()) ** 2, 0.0) / n)
    return [OracleResult(case, "mean", mean, float(s.mean()), se_mean, 4.0),
            OracleResult(case, "variance", var, float(s.var(ddof=1)), se_var, 4.0)]


def crossover_identity(n: int, seed: int) -> int:
    """Number of simulated crossover individuals whose CWCE differs from ``U_AY``."""
    panel = simulate_panel(ScmParams.crossover(), n, 3, seed)
    bad = 0
    for i in range(n):
        d = cwce_crossover(panel.y[i, 1], panel.y[i, 2], int(panel.a[i, 0]))
        bad += d.value != panel.u[i, 1]
    return bad


def run_oracle_suite(n_cases: int = 50, n_draws: int = 100_000, seed: int = 0,
                     kinds=(ScmKind.GAUSSIAN, ScmKind.LOGNORMAL, ScmKind.TRUNCATED)) -> list[OracleResult]:
    results = []
    for kind in kinds:
        for case in oracle_cases(kind, n_cases, seed):
            results += check_case(case, n_draws)
    return results
