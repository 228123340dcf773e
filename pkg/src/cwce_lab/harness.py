"""Config-driven experiment pipeline: simulate, fit, estimate and emit CSV data.

A run is described by a JSON config (see :func:`config_from_dict`). Each
recipe writes plain CSV/JSON artifacts into the output directory and a
``manifest.json`` listing the SHA-256 of every artifact, the seed and a hash
of the model parameters. No timestamps or host details enter any artifact,
so identical configs produce identical manifests.

Replicate ``r`` of a multi-seed recipe uses seed ``seed + r``. Every other
random quantity is a stream of the config seed (see :mod:`cwce_lab.rng`).
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import io
from .cwce import Degenerate, Gaussian, GridSpec, cross_world_joint_truncated, cwce
from .errors import ConfigError, CwceLabError
from .inference import DensityMode, marginal_ice_density, plug_in_params
from .reml import ModelSpec, fit_lmm_reml, fit_naive_pooled
from .scm import (Measure, Panel, ScmKind, ScmParams, closed_form_effect, marginal_ice_moments,
                  simulate_panel, true_eices, true_ices)
from .validation import crossover_identity, run_oracle_suite

SCHEMA_VERSION = 1
THREADS_ENV = "CWCE_LAB_THREADS"


class Recipe(str, enum.Enum):
    FIG5 = "Fig5"
    FIG7 = "Fig7"
    FIG8 = "Fig8"
    FIG9 = "Fig9"
    FIG10 = "Fig10"
    FIG11 = "Fig11"
    FIG12 = "Fig12"
    FIG13 = "Fig13"
    TABLE5 = "Table5"
    BIAS_DEMO = "BiasDemo"
    CUSTOM = "Custom"


_G, _L, _T = ScmKind.GAUSSIAN, ScmKind.LOGNORMAL, ScmKind.TRUNCATED
RECIPE_KINDS = {
    Recipe.FIG5: {_G}, Recipe.FIG7: {_L, _T}, Recipe.FIG8: {_G}, Recipe.FIG9: {_L},
    Recipe.FIG10: {_T}, Recipe.FIG11: {_G}, Recipe.FIG12: {_G}, Recipe.FIG13: {_L},
    Recipe.TABLE5: {_T}, Recipe.BIAS_DEMO: {_G}, Recipe.CUSTOM: {_G, _L, _T},
}

DEFAULT_SUBSET_GRID = tuple((n, m) for n in (100, 500, 1000) for m in (3, 10, 100))
PATTERNS = ((0, 0), (1, 0), (0, 1), (1, 1))
GRID_RECIPES = {Recipe.FIG11, Recipe.FIG12, Recipe.FIG13, Recipe.TABLE5}
PROFILE_RECIPES = {Recipe.FIG8, Recipe.FIG9, Recipe.FIG10}


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: Recipe
    scm: ScmParams
    n: int = 1000
    m: int = 100
    seed: int = 0
    subset_grid: tuple = DEFAULT_SUBSET_GRID
    k: int = 3
    regime: tuple = (1, 1)
    outputs: str | None = None
    replicates: int = 20
    h_values: tuple = (3, 10, 100)
    n_eval: int | None = None
    grid_points: int = 256
    mc_draws: int = 100_000
    oracle_cases: int = 50
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["recipe"] = self.recipe.value
        out["scm"] = self.scm.to_dict()
        out["subset_grid"] = [list(c) for c in self.subset_grid]
        out["regime"] = list(self.regime)
        out["h_values"] = list(self.h_values)
        return out


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
_SCM_FIELDS = {f.name for f in dataclasses.fields(ScmParams)}


def _int(data, name, lo=None):
    value = data[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{name} must be at least {lo}, got {value}")
    return value


def _scm_from_dict(data) -> ScmParams:
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("scm must be an object with a 'kind'")
    unknown = set(data) - _SCM_FIELDS
    if unknown:
        raise ConfigError(f"unknown scm keys: {sorted(unknown)}")
    try:
        kind = ScmKind(data["kind"])
        overrides = {key: value for key, value in data.items() if key != "kind"}
        base = ScmParams.default_for(kind).to_dict()
        base.update(overrides)
        return ScmParams.from_dict(base)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scm: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed JSON config. Unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    for name in ("recipe", "scm"):
        if name not in data:
            raise ConfigError(f"missing required key {name!r}")
    try:
        recipe = Recipe(data["recipe"])
    except ValueError:
        raise ConfigError(f"unknown recipe {data['recipe']!r}; choose from {[r.value for r in Recipe]}") from None
    kw = {"recipe": recipe, "scm": _scm_from_dict(data["scm"])}
    for name, lo in (("n", 1), ("m", 1), ("seed", 0), ("k", 1), ("replicates", 1),
                     ("grid_points", 8), ("mc_draws", 10), ("oracle_cases", 1)):
        if name in data:
            kw[name] = _int(data, name, lo)
    if kw.get("seed", 0) >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    if data.get("n_eval") is not None:
        kw["n_eval"] = _int(data, "n_eval", 2)
    if data.get("outputs") is not None:
        if not isinstance(data["outputs"], str):
            raise ConfigError("outputs must be a path string")
        kw["outputs"] = data["outputs"]
    try:
        if "subset_grid" in data:
            kw["subset_grid"] = tuple((int(a), int(b)) for a, b in data["subset_grid"])
        if "regime" in data:
            kw["regime"] = tuple(int(v) for v in data["regime"])
        if "h_values" in data:
            kw["h_values"] = tuple(int(v) for v in data["h_values"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed list value: {exc}") from exc
    cfg = ExperimentConfig(**kw)
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig) -> None:
    if cfg.scm.kind not in RECIPE_KINDS[cfg.recipe]:
        allowed = sorted(k.value for k in RECIPE_KINDS[cfg.recipe])
        raise ConfigError(f"recipe {cfg.recipe.value} needs scm kind in {allowed}, got {cfg.scm.kind.value}")
    if cfg.m < 3:
        raise ConfigError("mixed-model panels need m >= 3")
    if not 2 <= cfg.k <= cfg.m:
        raise ConfigError(f"k must lie in [2, m] = [2, {cfg.m}], got {cfg.k}")
    if len(cfg.regime) < cfg.k - 1 or any(v not in (0, 1) for v in cfg.regime):
        raise ConfigError(f"regime must be a 0/1 list of length >= k - 1 = {cfg.k - 1}")
    for ns, ms in cfg.subset_grid if cfg.recipe in GRID_RECIPES else ():
        if not (1 <= ns <= cfg.n and 1 <= ms <= cfg.m):
            raise ConfigError(f"subset ({ns}, {ms}) exceeds the panel size ({cfg.n}, {cfg.m})")
        if ms < cfg.k:
            raise ConfigError(f"subset ({ns}, {ms}) is shorter than the evaluation time k = {cfg.k}")
    for h in cfg.h_values if cfg.recipe in PROFILE_RECIPES else ():
        if not cfg.k <= h <= cfg.m:
            raise ConfigError(f"history length {h} must lie in [k, m] = [{cfg.k}, {cfg.m}]")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def resolve_threads(requested: int | None = None) -> int:
    """Thread count: the environment variable wins over the requested value."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    else:
        value = 1 if requested is None else int(requested)
    if value < 1:
        raise ConfigError(f"thread count must be positive, got {value}")
    return value


# ---------------------------------------------------------------------------
# artifact bundle


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def params_hash(params: ScmParams) -> str:
    return hashlib.sha256(json.dumps(params.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Bundle:
    """Output directory that records every artifact written into it."""

    root: Path
    threads: int = 1
    files: set = field(default_factory=set)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.root = Path(self.root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            probe = self.root / ".write-probe"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"{self.root}: output directory is not writable ({exc.strerror})") from exc

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            self.files.add(rel)
        return p

    def csv(self, rel, header, rows):
        try:
            io.write_rows(self.path(rel), header, rows)
        except OSError as exc:
            raise CwceLabError(f"{self.root / rel}: write failed ({exc.strerror})") from exc

    def json(self, rel, obj):
        self.path(rel).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def panel(self, rel, panel: Panel):
        path = self.path(rel)
        _, side = io.write_panel(panel, path)
        with self._lock:
            self.files.add(str(side.relative_to(self.root)))

    def map(self, fn, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def manifest(self, cfg: ExperimentConfig, command: str, extra: dict | None = None) -> dict:
        artifacts = {rel: sha256_file(self.root / rel) for rel in sorted(self.files)}
        out = {"schema_version": SCHEMA_VERSION, "command": command, "recipe": cfg.recipe.value,
               "seed": cfg.seed, "params_sha256": params_hash(cfg.scm),
               "config": cfg.to_dict() | {"outputs": None}, "artifacts": artifacts}
        if extra:
            out.update(extra)
        (self.root / "manifest.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
        return out


# ---------------------------------------------------------------------------
# shared steps


def _simulate(cfg: ExperimentConfig, bundle: Bundle, seed: int | None = None, rel="panel.csv") -> Panel:
    panel = simulate_panel(cfg.scm, cfg.n, cfg.m, cfg.seed if seed is None else seed)
    if rel:
        bundle.panel(rel, panel)
    return panel


def _grid_spec(cfg) -> GridSpec:
    return GridSpec(n_points=cfg.grid_points)


def _cwce(history, params, cfg, k=None):
    k = cfg.k if k is None else k
    kw = {"grid_spec": _grid_spec(cfg)} if params.kind is ScmKind.LOGNORMAL else {}
    return cwce(history, params, k, cfg.regime[:k - 1], **kw)


def _fit_row(fit) -> list:
    return [fit.n, fit.m, int(fit.converged), fit.gradient_norm, fit.restricted_loglik,
            *fit.beta_hat, *fit.vc_hat]


_FIT_HEADER = ["n", "m", "converged", "gradient_norm", "restricted_loglik",
               "beta_intercept", "beta_lag1", "beta_lag2", "beta_confounder",
               "tau_intercept", "tau_lag1", "tau_lag2", "sigma"]


def _density_rows(dist, x=None):
    """``(x, density)`` rows for a continuous CWCE, a single ``(value, inf)`` for a point mass."""
    if isinstance(dist, Degenerate):
        return [(dist.value, math.inf)]
    if isinstance(dist, Gaussian):
        if x is None:
            x = np.linspace(dist.mean - 5 * dist.sd, dist.mean + 5 * dist.sd, 401)
        return list(zip(x, dist.pdf(x)))
    return list(zip(dist.points, dist.density))


def _pattern_individuals(panel: Panel, k: int) -> dict:
    """First individual showing each exposure pattern ``(A_{k-2}, A_{k-1})``."""
    found = {}
    for pattern in PATTERNS:
        hits = np.flatnonzero((panel.a[:, k - 3] == pattern[0]) & (panel.a[:, k - 2] == pattern[1]))
        if hits.size:
            found[pattern] = int(hits[0])
    return found


def _pattern_label(pattern) -> str:
    return f"{pattern[0]}{pattern[1]}"


# ---------------------------------------------------------------------------
# recipes


def _fig5(cfg, bundle):
    mean, var = marginal_ice_moments(cfg.scm, cfg.regime, cfg.k)
    sd = math.sqrt(var)
    x = np.linspace(mean - 6 * sd, mean + 6 * sd, 1201)
    bundle.csv("fig5_ice_density.csv", ["x", "density"], zip(x, norm.pdf(x, mean, sd)))
    ace = closed_form_effect(cfg.scm, Measure.ACE, cfg.regime, cfg.k)
    bundle.csv("fig5_ace.csv", ["measure", "value", "ice_mean", "ice_variance"], [("ACE", ace, mean, var)])
    panel = _simulate(cfg, bundle)
    bundle.csv("fig5_ice_samples.csv", ["id", "ice"], zip(panel.ids, true_ices(panel, cfg.regime, cfg.k)))


def _fig7(cfg, bundle):
    panel = _simulate(cfg, bundle)
    ice = true_ices(panel, cfg.regime, cfg.k)
    eice = true_eices(panel, cfg.regime, cfg.k)
    c_prev = panel.c[:, cfg.k - 2]
    bundle.csv("fig7_ice_eice.csv", ["id", "c_prev", "ice", "eice"], zip(panel.ids, c_prev, ice, eice))
    vals, _ = cfg.scm.confounder_values()
    bundle.csv("fig7_cace.csv", ["c_value", "cace"],
               [(v, closed_form_effect(cfg.scm, Measure.CACE, cfg.regime, cfg.k, v)) for v in vals])
    if cfg.scm.kind is ScmKind.TRUNCATED:
        rows = []
        for value in (-1, 0, 1):
            sel = eice[np.rint(ice) == value]
            rows.append((value, sel.size, *(np.array([sel.mean(), sel.min(), sel.max()]) if sel.size
                                            else [math.nan] * 3)))
        bundle.csv("fig7_eice_by_ice.csv", ["ice", "count", "eice_mean", "eice_min", "eice_max"], rows)


def _profiles(cfg, bundle, prefix):
    panel = _simulate(cfg, bundle)
    chosen = _pattern_individuals(panel, cfg.k)
    ice = true_ices(panel, cfg.regime, cfg.k)
    bundle.csv(f"{prefix}_individuals.csv", ["pattern", "id", "true_ice"],
               [(_pattern_label(p), panel.ids[i], ice[i]) for p, i in chosen.items()])
    summary, dens = [], []
    for pattern, i in chosen.items():
        for h in cfg.h_values:
            dist = _cwce(panel.history(i, h), cfg.scm, cfg)
            summary.append((_pattern_label(pattern), panel.ids[i], h, dist.expectation(), dist.variance()))
            dens += [(_pattern_label(pattern), panel.ids[i], h, x, d) for x, d in _density_rows(dist)]
    bundle.csv(f"{prefix}_cwce_summary.csv", ["pattern", "id", "h", "mean", "variance"], summary)
    bundle.csv(f"{prefix}_cwce_density.csv", ["pattern", "id", "h", "x", "density"], dens)


def _fig10(cfg, bundle):
    panel = _simulate(cfg, bundle)
    ice = np.rint(true_ices(panel, cfg.regime, cfg.k)).astype(int)
    regime = cfg.regime[:cfg.k - 1]
    chosen = _pattern_individuals(panel, cfg.k)
    rows = []
    for pattern, i in chosen.items():
        for h in cfg.h_values:
            pmf = cross_world_joint_truncated(panel.history(i, h), cfg.scm, cfg.k, regime).pmf
            rows += [(_pattern_label(pattern), panel.ids[i], h, da, d0, pmf[da, d0]) for da in (0, 1) for d0 in (0, 1)]
    bundle.csv("fig10_joint_pmf.csv", ["pattern", "id", "h", "d_regime", "d_zero", "probability"], rows)

    def per_h(h):
        out = []
        for i in range(panel.n):
            dist = cwce(panel.history(i, h), cfg.scm, cfg.k, regime)
            out.append((panel.ids[i], h, ice[i], *dist.probs))
        return out

    rows = [r for chunk in bundle.map(per_h, cfg.h_values) for r in chunk]
    bundle.csv("fig10_p_minus1.csv", ["id", "h", "true_ice", "p_minus1", "p_0", "p_plus1"], rows)


def _cell_dir(ns, ms) -> str:
    return f"cells/n{ns}_m{ms}"


def _subset_grid(cfg, bundle, per_cell):
    panel = _simulate(cfg, bundle)
    spec = ModelSpec.for_kind(cfg.scm.kind)

    def run_cell(cell):
        ns, ms = cell
        sub = panel.subset(ns, ms)
        fit = fit_lmm_reml(sub, spec)
        bundle.json(f"{_cell_dir(ns, ms)}/fit.json", fit.to_dict())
        if not fit.converged:
            return _fit_row(fit)
        params = plug_in_params(fit, cfg.scm.kind, cfg.scm)
        n_eval = ns if cfg.n_eval is None else min(ns, cfg.n_eval)
        per_cell(cfg, bundle, panel, sub.subset(n_eval), params, ns, ms)
        return _fit_row(fit)

    rows = bundle.map(run_cell, cfg.subset_grid)
    bundle.csv("fits.csv", _FIT_HEADER, rows)
    return panel


def _estimates(cfg, sub, params, ms):
    est, true = [], []
    for i in range(sub.n):
        hist = sub.history(i, ms)
        est.append(_cwce(hist, params, cfg))
        true.append(_cwce(hist, cfg.scm, cfg))
    return est, true


def _ice_rows(sub, cfg, est, true):
    ice = true_ices(sub, cfg.regime, cfg.k)
    return [(sub.ids[i], ice[i], e.mode(), e.expectation(), e.variance(), t.expectation(), t.variance())
            for i, (e, t) in enumerate(zip(est, true))]


_ICE_HEADER = ["id", "true_ice", "est_map", "est_mean", "est_variance", "true_cwce_mean", "true_cwce_variance"]


def _fig11_cell(cfg, bundle, panel, sub, params, ns, ms):
    est, true = _estimates(cfg, sub, params, ms)
    bundle.csv(f"{_cell_dir(ns, ms)}/ice.csv", _ICE_HEADER, _ice_rows(sub, cfg, est, true))


def _density_cell(cfg, bundle, sub, est, true, points, ns, ms, truth=None):
    cols = {"x": points}
    if truth is not None:
        cols["true_density"] = truth
    for label, dists in (("est", est), ("true_cwce", true)):
        for mode, tag in ((DensityMode.AVERAGE_DENSITY, "average"), (DensityMode.KERNEL_OF_EXPECTATIONS, "kernel")):
            cols[f"{label}_{tag}"] = marginal_ice_density(dists, mode, points=points).density
    bundle.csv(f"{_cell_dir(ns, ms)}/density.csv", list(cols), zip(*cols.values()))


def _fig12_cell(cfg, bundle, panel, sub, params, ns, ms):
    est, true = _estimates(cfg, sub, params, ms)
    bundle.csv(f"{_cell_dir(ns, ms)}/ice.csv", _ICE_HEADER, _ice_rows(sub, cfg, est, true))
    mean, var = marginal_ice_moments(cfg.scm, cfg.regime, cfg.k)
    sd = math.sqrt(var)
    points = np.linspace(mean - 6 * sd, mean + 6 * sd, 1024)
    _density_cell(cfg, bundle, sub, est, true, points, ns, ms, norm.pdf(points, mean, sd))


def _fig13_cell(cfg, bundle, panel, sub, params, ns, ms):
    est, true = _estimates(cfg, sub, params, ms)
    bundle.csv(f"{_cell_dir(ns, ms)}/ice.csv", _ICE_HEADER, _ice_rows(sub, cfg, est, true))
    ice = true_ices(panel, cfg.regime, cfg.k)
    lo, hi = np.quantile(ice, [0.001, 0.999])
    pad = 0.25 * (hi - lo)
    points = np.linspace(lo - pad, hi + pad, 1024)
    _density_cell(cfg, bundle, sub, est, true, points, ns, ms)


def _table5_cell(cfg, bundle, panel, sub, params, ns, ms):
    regime = cfg.regime[:cfg.k - 1]
    ice = np.rint(true_ices(sub, regime, cfg.k)).astype(int)
    counts = np.zeros((3, 3), dtype=np.int64)
    rows = []
    for i in range(sub.n):
        dist = cwce(sub.history(i, ms), params, cfg.k, regime)
        est = int(dist.mode())
        counts[ice[i] + 1, est + 1] += 1
        rows.append((sub.ids[i], ice[i], est, *dist.probs))
    bundle.csv(f"{_cell_dir(ns, ms)}/p_minus1.csv",
               ["id", "true_ice", "est_map", "p_minus1", "p_0", "p_plus1"], rows)
    table = counts / counts.sum()
    bundle.csv(f"table5_n{ns}_m{ms}.csv", ["true_ice", "est_minus1", "est_0", "est_plus1"],
               [(v, *table[v + 1]) for v in (-1, 0, 1)])


def _bias_demo(cfg, bundle):
    spec = ModelSpec.for_kind(cfg.scm.kind)

    def one(r):
        seed = cfg.seed + r
        panel = simulate_panel(cfg.scm, cfg.n, cfg.m, seed)
        naive = fit_naive_pooled(panel, spec)
        fit = fit_lmm_reml(panel, spec)
        regime = cfg.regime[:cfg.k - 1]
        return (r, seed, naive.implied_ace(regime), fit.implied_ace(regime), int(fit.converged),
                fit.fixed("lag1"), fit.fixed("lag2"), fit.sigma_hat)

    rows = bundle.map(one, range(cfg.replicates))
    bundle.csv("bias_demo.csv", ["replicate", "seed", "naive_ace", "reml_ace", "reml_converged",
                                 "reml_beta1", "reml_beta2", "reml_sigma"], rows)
    naive = np.array([r[2] for r in rows])
    reml = np.array([r[3] for r in rows])
    truth = closed_form_effect(cfg.scm, Measure.ACE, cfg.regime, cfg.k)
    summary = [(label, x.mean(), *np.quantile(x, [0.025, 0.975])) for label, x in (("naive", naive), ("reml", reml))]
    bundle.csv("bias_demo_summary.csv", ["estimator", "mean", "q025", "q975"], summary + [("truth", truth, truth, truth)])


def _custom(cfg, bundle):
    panel = _simulate(cfg, bundle)
    spec = ModelSpec.for_kind(cfg.scm.kind)
    fit = fit_lmm_reml(panel, spec)
    bundle.json("fit.json", fit.to_dict())
    bundle.json("naive.json", {"fixed_names": list(fit.fixed_names),
                               "beta_hat": fit_naive_pooled(panel, spec).beta_hat.tolist()})
    _emit_cwce(cfg, bundle, panel, fit)


def _emit_cwce(cfg, bundle, panel, fit):
    n_eval = min(panel.n, 10 if cfg.n_eval is None else cfg.n_eval)
    sub = panel.subset(n_eval)
    if not fit.converged:
        raise CwceLabError("REML fit did not converge; no plug-in CWCE written")
    est, true = _estimates(cfg, sub, plug_in_params(fit, cfg.scm.kind, cfg.scm), cfg.m)
    bundle.csv("cwce.csv", _ICE_HEADER, _ice_rows(sub, cfg, est, true))
    lines = [json.dumps({"id": int(sub.ids[i]), "estimated": e.to_dict(), "true": t.to_dict()})
             for i, (e, t) in enumerate(zip(est, true))]
    bundle.path("cwce.jsonl").write_text("\n".join(lines) + "\n")


_RECIPES = {
    Recipe.FIG5: _fig5,
    Recipe.FIG7: _fig7,
    Recipe.FIG8: lambda cfg, b: _profiles(cfg, b, "fig8"),
    Recipe.FIG9: lambda cfg, b: _profiles(cfg, b, "fig9"),
    Recipe.FIG10: _fig10,
    Recipe.FIG11: lambda cfg, b: _subset_grid(cfg, b, _fig11_cell),
    Recipe.FIG12: lambda cfg, b: _subset_grid(cfg, b, _fig12_cell),
    Recipe.FIG13: lambda cfg, b: _subset_grid(cfg, b, _fig13_cell),
    Recipe.TABLE5: lambda cfg, b: _subset_grid(cfg, b, _table5_cell),
    Recipe.BIAS_DEMO: _bias_demo,
    Recipe.CUSTOM: _custom,
}


# ---------------------------------------------------------------------------
# entry points


def _bundle(cfg, out, threads) -> Bundle:
    root = out if out is not None else cfg.outputs
    if root is None:
        raise ConfigError("no output directory: set 'outputs' in the config or pass --out")
    return Bundle(Path(root), resolve_threads(threads))


def run(cfg: ExperimentConfig, out=None, threads=None) -> dict:
    """Execute the configured recipe and return the manifest."""
    bundle = _bundle(cfg, out, threads)
    _RECIPES[cfg.recipe](cfg, bundle)
    return bundle.manifest(cfg, "run")


def simulate(cfg: ExperimentConfig, out=None, threads=None) -> dict:
    bundle = _bundle(cfg, out, threads)
    _simulate(cfg, bundle)
    return bundle.manifest(cfg, "simulate")


def fit(cfg: ExperimentConfig, out=None, threads=None) -> dict:
    bundle = _bundle(cfg, out, threads)
    panel = _simulate(cfg, bundle)
    spec = ModelSpec.for_kind(cfg.scm.kind)
    result = fit_lmm_reml(panel, spec)
    naive = fit_naive_pooled(panel, spec)
    bundle.json("fit.json", result.to_dict())
    bundle.csv("fit_summary.csv", _FIT_HEADER, [_fit_row(result)])
    bundle.csv("naive.csv", ["term", "estimate"], zip(naive.fixed_names, naive.beta_hat))
    return bundle.manifest(cfg, "fit")


def cwce_stage(cfg: ExperimentConfig, out=None, threads=None) -> dict:
    bundle = _bundle(cfg, out, threads)
    panel = _simulate(cfg, bundle)
    result = fit_lmm_reml(panel, ModelSpec.for_kind(cfg.scm.kind))
    bundle.json("fit.json", result.to_dict())
    _emit_cwce(cfg, bundle, panel, result)
    return bundle.manifest(cfg, "cwce")


def validate(cfg: ExperimentConfig, out=None, threads=None) -> dict:
    """Closed-form vs Monte-Carlo oracle suite; ``manifest['failures']`` counts breaches."""
    bundle = _bundle(cfg, out, threads)
    kinds = (ScmKind.GAUSSIAN, ScmKind.LOGNORMAL, ScmKind.TRUNCATED)
    chunks = bundle.map(lambda kind: run_oracle_suite(cfg.oracle_cases, cfg.mc_draws, cfg.seed, (kind,)), kinds)
    results = [r for chunk in chunks for r in chunk]
    rows = [(r.case.kind.value, r.case.index, r.case.h, r.case.k, "".join(map(str, r.case.regime)), r.statistic,
             r.exact, r.estimate, r.se, r.z, r.tolerance, int(r.passed)) for r in results]
    bundle.csv("validate.csv", ["kind", "case", "h", "k", "regime", "statistic", "exact", "monte_carlo",
                                "se", "z", "tolerance", "passed"], rows)
    crossover_bad = crossover_identity(10_000, cfg.seed)
    failures = sum(not r.passed for r in results) + int(crossover_bad > 0)
    bundle.csv("validate_crossover.csv", ["individuals", "mismatches"], [(10_000, crossover_bad)])
    return bundle.manifest(cfg, "validate", {"failures": failures})


COMMANDS = {"run": run, "simulate": simulate, "fit": fit, "cwce": cwce_stage, "validate": validate}
