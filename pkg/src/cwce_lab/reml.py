"""Restricted maximum likelihood for the random-intercept, random-slope model.

The model for individual ``i`` is ``y_i = X_i beta + Z_i b_i + e_i`` with
``b_i ~ N(0, D)`` and ``e_i ~ N(0, sigma^2 I)``.  The fixed design holds an
intercept, the lag-1 and lag-2 exposures and the confounder; the random design
holds an intercept and the two exposure lags.

The restricted log-likelihood is evaluated from per-individual sufficient
statistics.  With ``D = L L^T``, ``G_i = Z_i L`` and
``M_i = sigma^2 I + G_i^T G_i`` the Woodbury identity gives

    V_i^{-1} = sigma^{-2} (I - G_i M_i^{-1} G_i^T)
    log|V_i| = (m_i - q) log sigma^2 + log|M_i|

so every individual costs a ``q x q`` Cholesky factorization.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionError, IdentifiabilityError, ParameterError
from .scm import Panel, ScmKind, ScmParams

FIXED_TERMS = ("intercept", "lag1", "lag2", "confounder")
RANDOM_TERMS = ("intercept", "lag1", "lag2")
_LOG_FLOOR = -15.0
_ZERO_CUTOFF = math.exp(_LOG_FLOOR)


class Transform(str, enum.Enum):
    IDENTITY = "identity"
    LOG = "log"


class CovStructure(str, enum.Enum):
    DIAGONAL = "diagonal"
    UNSTRUCTURED = "unstructured"


@dataclass(frozen=True)
class ModelSpec:
    """Model formula.

    ``confounder_timing`` chooses which confounder enters the outcome at time
    ``k``: ``"previous"`` uses ``C_{k-1}`` (the simulation mechanism), while
    ``"current"`` uses ``C_k``.
    """

    response_transform: Transform = Transform.IDENTITY
    fixed: tuple = FIXED_TERMS
    random: tuple = RANDOM_TERMS
    random_cov_structure: CovStructure = CovStructure.DIAGONAL
    confounder_timing: str = "previous"

    def __post_init__(self):
        object.__setattr__(self, "response_transform", Transform(self.response_transform))
        object.__setattr__(self, "random_cov_structure", CovStructure(self.random_cov_structure))
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "random", tuple(self.random))
        for name in self.fixed:
            if name not in FIXED_TERMS:
                raise ParameterError(f"unknown fixed term {name!r}")
        for name in self.random:
            if name not in RANDOM_TERMS:
                raise ParameterError(f"unknown random term {name!r}")
        if not self.fixed:
            raise ParameterError("at least one fixed effect is required")
        if len(set(self.fixed)) != len(self.fixed) or len(set(self.random)) != len(self.random):
            raise ParameterError("duplicate model terms")
        if self.confounder_timing not in ("previous", "current"):
            raise ParameterError("confounder_timing is 'previous' or 'current'")

    @classmethod
    def for_kind(cls, kind, **overrides) -> "ModelSpec":
        transform = Transform.LOG if ScmKind(kind) is ScmKind.LOGNORMAL else Transform.IDENTITY
        overrides.setdefault("response_transform", transform)
        return cls(**overrides)

    def to_dict(self) -> dict:
        return {"response_transform": self.response_transform.value, "fixed": list(self.fixed),
                "random": list(self.random), "random_cov_structure": self.random_cov_structure.value,
                "confounder_timing": self.confounder_timing}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(**data)


@dataclass(frozen=True)
class VarianceComponents:
    """Random-effect covariance ``cov`` (``q x q``) and residual sd ``sigma``."""

    cov: np.ndarray
    sigma: float

    @classmethod
    def diagonal(cls, taus, sigma) -> "VarianceComponents":
        taus = np.asarray(taus, dtype=float)
        return cls(np.diag(taus**2), float(sigma))


@dataclass
class LongData:
    """Stacked long-format design; ``offsets[i]:offsets[i+1]`` indexes individual ``i``."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    offsets: np.ndarray
    fixed_names: tuple
    random_names: tuple

    @property
    def n(self) -> int:
        return self.offsets.size - 1


def design_columns(a: np.ndarray, c: np.ndarray, timing: str = "previous") -> dict:
    """Per-time covariate columns for one individual (or rows of a panel)."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    lag1 = np.zeros_like(a)
    lag2 = np.zeros_like(a)
    lag1[..., 1:] = a[..., :-1]
    lag2[..., 2:] = a[..., :-2]
    if timing == "previous":
        conf = np.zeros_like(c)
        conf[..., 1:] = c[..., :-1]
    else:
        conf = c.copy()
    return {"intercept": np.ones_like(a), "lag1": lag1, "lag2": lag2, "confounder": conf}


def long_data(panel: Panel, spec: ModelSpec) -> LongData:
    y = panel.y
    if spec.response_transform is Transform.LOG:
        if np.any(y <= 0):
            raise ParameterError("log transform needs strictly positive responses")
        y = np.log(y)
    cols = design_columns(panel.a, panel.c, spec.confounder_timing)
    n, m = y.shape
    x = np.stack([cols[name] for name in spec.fixed], axis=-1).reshape(n * m, -1)
    z = np.stack([cols[name] for name in spec.random], axis=-1).reshape(n * m, -1) if spec.random \
        else np.zeros((n * m, 0))
    return LongData(x, z, y.reshape(-1).astype(float), np.arange(n + 1) * m,
                    spec.fixed, spec.random)


@dataclass
class _Stats:
    """Per-individual blocks (zero-padded to a common length) and cross products."""

    xb: np.ndarray   # (n, m, p)
    zb: np.ndarray   # (n, m, q)
    yb: np.ndarray   # (n, m), least-squares residuals of the response
    xx: np.ndarray   # (n, p, p)
    zx: np.ndarray   # (n, q, p)
    zz: np.ndarray   # (n, q, q)
    m: np.ndarray    # (n,) observed rows per individual
    beta_shift: np.ndarray

    @property
    def p(self) -> int:
        return self.xb.shape[2]

    @property
    def q(self) -> int:
        return self.zb.shape[2]


def _stats(data: LongData) -> _Stats:
    # The restricted likelihood is invariant under y -> y + X g; working with
    # least-squares residuals keeps the response small.
    beta_ols, *_ = np.linalg.lstsq(data.x, data.y, rcond=None)
    resid = data.y - data.x @ beta_ols
    n = data.n
    m = np.diff(data.offsets)
    width = int(m.max())
    p, q = data.x.shape[1], data.z.shape[1]
    xb, zb, yb = np.zeros((n, width, p)), np.zeros((n, width, q)), np.zeros((n, width))
    if np.all(m == width):
        xb[:], zb[:], yb[:] = data.x.reshape(n, width, p), data.z.reshape(n, width, q), resid.reshape(n, width)
    else:
        for i, (s, e) in enumerate(zip(data.offsets[:-1], data.offsets[1:])):
            xb[i, :e - s], zb[i, :e - s], yb[i, :e - s] = data.x[s:e], data.z[s:e], resid[s:e]
    return _Stats(xb, zb, yb, np.einsum("nkp,nkr->npr", xb, xb), np.einsum("nkq,nkp->nqp", zb, xb),
                  np.einsum("nkq,nkr->nqr", zb, zb), m.astype(float), beta_ols)


def _profile(stats: _Stats, cov: np.ndarray, sigma: float):
    """Restricted log-likelihood and GLS estimate; ``(-inf, None)`` if not PD.

    The GLS residual quadratic form is evaluated in penalized least-squares
    form, ``r'V^-1 r = (|r - G u|^2 + sigma^2 |u|^2) / sigma^2`` with
    ``u = M^-1 G' r``, which is a sum of nonnegative terms.
    """
    s2 = sigma * sigma
    q = stats.q
    if not (s2 > 0 and np.isfinite(s2)):
        return -np.inf, None
    xy = np.einsum("nkp,nk->np", stats.xb, stats.yb)
    if q:
        try:
            lmat = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(cov)
            if w.min() < -1e-10 * max(np.trace(cov), 1e-300):
                return -np.inf, None
            lmat = v * np.sqrt(np.clip(w, 0.0, None))
        mmat = s2 * np.eye(q) + lmat.T @ stats.zz @ lmat
        try:
            chol = np.linalg.cholesky(mmat)
        except np.linalg.LinAlgError:
            return -np.inf, None
        logdet_m = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum()
        lzx = lmat.T @ stats.zx
        zl = stats.zb @ lmat
        lzy = np.einsum("nki,nk->ni", zl, stats.yb)
        wx = np.linalg.solve(chol, lzx)
        wy = np.linalg.solve(chol, lzy[..., None])[..., 0]
        xvx = (stats.xx.sum(axis=0) - np.einsum("nip,nir->pr", wx, wx)) / s2
        xvy = (xy.sum(axis=0) - np.einsum("nip,ni->p", wx, wy)) / s2
        logdet_v = float(((stats.m - q) * math.log(s2)).sum() + logdet_m)
    else:
        xvx = stats.xx.sum(axis=0) / s2
        xvy = xy.sum(axis=0) / s2
        logdet_v = float(stats.m.sum() * math.log(s2))
    xvx = 0.5 * (xvx + xvx.T)
    try:
        cx = np.linalg.cholesky(xvx)
    except np.linalg.LinAlgError:
        return -np.inf, None
    beta = np.linalg.solve(cx.T, np.linalg.solve(cx, xvy))
    r = stats.yb - stats.xb @ beta
    if q:
        gr = np.einsum("nki,nk->ni", zl, r)
        u = np.linalg.solve(chol.transpose(0, 2, 1), np.linalg.solve(chol, gr[..., None]))[..., 0]
        fitted = np.einsum("nki,ni->nk", zl, u)
        rvr = (np.sum((r - fitted) ** 2) + s2 * np.sum(u * u)) / s2
    else:
        rvr = np.sum(r * r) / s2
    logdet_x = 2.0 * np.log(np.diag(cx)).sum()
    value = -0.5 * (logdet_v + logdet_x + rvr)
    if not np.isfinite(value):
        return -np.inf, None
    return float(value), (beta + stats.beta_shift, xvx)


def restricted_loglik(panel_view, spec: ModelSpec, vc) -> float:
    """Restricted log-likelihood (without the ``2 pi`` constant) at ``vc``.

    ``vc`` is a :class:`VarianceComponents` or a sequence of standard
    deviations, one per random term followed by the residual sd.  Returns
    ``-inf`` when a covariance matrix is not positive definite.
    """
    data = panel_view if isinstance(panel_view, LongData) else long_data(panel_view, spec)
    vc = _as_vc(vc, len(spec.random))
    return _profile(_stats(data), vc.cov, vc.sigma)[0]


def _as_vc(vc, q: int) -> VarianceComponents:
    if isinstance(vc, VarianceComponents):
        cov = np.asarray(vc.cov, dtype=float).reshape(q, q)
        return VarianceComponents(cov, float(vc.sigma))
    vals = np.asarray(vc, dtype=float).reshape(-1)
    if vals.size != q + 1:
        raise DimensionError(f"expected {q} random-effect sds plus sigma, got {vals.size} values")
    return VarianceComponents.diagonal(vals[:q], vals[q])


# ---------------------------------------------------------------------------
# parameterization


def _unpack(theta: np.ndarray, q: int, structure: CovStructure):
    sigma = math.exp(theta[-1])
    if structure is CovStructure.DIAGONAL:
        return np.diag(np.exp(2.0 * theta[:q])), sigma
    lmat = np.zeros((q, q))
    lmat[np.diag_indices(q)] = np.exp(theta[:q])
    lmat[np.tril_indices(q, -1)] = theta[q:-1]
    return lmat @ lmat.T, sigma


def _pack(cov: np.ndarray, sigma: float, structure: CovStructure) -> np.ndarray:
    q = cov.shape[0]
    if structure is CovStructure.DIAGONAL:
        sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        return np.concatenate([np.log(np.maximum(sd, _ZERO_CUTOFF)), [math.log(sigma)]])
    lmat = np.linalg.cholesky(cov + 1e-12 * max(np.trace(cov), 1.0) * np.eye(q))
    diag = np.log(np.maximum(np.diag(lmat), _ZERO_CUTOFF))
    return np.concatenate([diag, lmat[np.tril_indices(q, -1)], [math.log(sigma)]])


def _bounds(theta0: np.ndarray, q: int, structure: CovStructure, scale: float):
    hi = math.log(max(scale, 1e-8)) + 10.0
    bounds = [(_LOG_FLOOR, hi)] * q
    if structure is CovStructure.UNSTRUCTURED:
        bounds += [(-math.exp(hi), math.exp(hi))] * (q * (q - 1) // 2)
    bounds.append((_LOG_FLOOR, hi))
    return bounds


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitOptions:
    xatol: float = 1e-7
    fatol: float = 1e-9
    max_iter: int = 5000
    gradient_tol: float = 1e-4
    polish_steps: int = 50
    fd_step: float = 1e-3


@dataclass
class RemlFit:
    spec: ModelSpec
    fixed_names: tuple
    random_names: tuple
    beta_hat: np.ndarray
    random_cov: np.ndarray
    sigma_hat: float
    restricted_loglik: float
    converged: bool
    n_iter: int
    gradient_norm: float
    beta_cov: np.ndarray | None = None
    n: int = 0
    m: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def tau_hat(self) -> np.ndarray:
        """Random-effect standard deviations in the order of ``random_names``."""
        return np.sqrt(np.clip(np.diag(self.random_cov), 0.0, None))

    def fixed(self, name: str) -> float:
        return float(self.beta_hat[self.fixed_names.index(name)]) if name in self.fixed_names else 0.0

    def tau(self, name: str) -> float:
        return float(self.tau_hat[self.random_names.index(name)]) if name in self.random_names else 0.0

    @property
    def vc_hat(self) -> tuple:
        return tuple(self.tau(name) for name in RANDOM_TERMS) + (self.sigma_hat,)

    def implied_ace(self, regime=(1, 1)) -> float:
        return float(regime[-1] * self.fixed("lag1") + (regime[-2] if len(regime) > 1 else 0) * self.fixed("lag2"))

    def to_scm_params(self, kind=None, base: ScmParams | None = None) -> ScmParams:
        """Plug-in model: estimated mean, exposure and confounder effects and latent covariance.

        Exposure-assignment coefficients and the confounder law are copied from
        ``base`` because they do not enter the latent posterior.
        """
        if kind is None:
            kind = ScmKind.LOGNORMAL if self.spec.response_transform is Transform.LOG else ScmKind.GAUSSIAN
        kind = ScmKind(kind)
        if base is None:
            base = ScmParams.default_for(kind)
        full = np.zeros((3, 3))
        idx = [RANDOM_TERMS.index(name) for name in self.random_names]
        full[np.ix_(idx, idx)] = self.random_cov
        taus = np.sqrt(np.clip(np.diag(full), 0.0, None))
        corr = np.eye(3)
        for i in range(3):
            for j in range(3):
                if i != j and taus[i] > 0 and taus[j] > 0:
                    corr[i, j] = full[i, j] / (taus[i] * taus[j])
        corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
        return ScmParams(kind=kind, mu=self.fixed("intercept"), beta1=self.fixed("lag1"),
                         beta2=self.fixed("lag2"), beta_c=self.fixed("confounder"),
                         alpha0=base.alpha0, alpha1=base.alpha1, alpha2=base.alpha2, alpha3=base.alpha3,
                         tau0=taus[0], tau1=taus[1], tau2=taus[2], sigma=self.sigma_hat,
                         latent_corr=tuple(map(tuple, corr)), confounder_law=base.confounder_law,
                         delta=base.delta)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "fixed_names": list(self.fixed_names),
            "random_names": list(self.random_names),
            "beta_hat": self.beta_hat.tolist(),
            "random_cov": self.random_cov.tolist(),
            "sigma_hat": self.sigma_hat,
            "restricted_loglik": self.restricted_loglik,
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "gradient_norm": self.gradient_norm,
            "beta_cov": None if self.beta_cov is None else self.beta_cov.tolist(),
            "n": self.n,
            "m": self.m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RemlFit":
        q = len(data["random_names"])
        return cls(
            spec=ModelSpec.from_dict(data["spec"]),
            fixed_names=tuple(data["fixed_names"]),
            random_names=tuple(data["random_names"]),
            beta_hat=np.array(data["beta_hat"], dtype=float),
            random_cov=np.array(data["random_cov"], dtype=float).reshape(q, q),
            sigma_hat=float(data["sigma_hat"]),
            restricted_loglik=float(data["restricted_loglik"]),
            converged=bool(data["converged"]),
            n_iter=int(data["n_iter"]),
            gradient_norm=float(data["gradient_norm"]),
            beta_cov=None if data.get("beta_cov") is None else np.array(data["beta_cov"], dtype=float),
            n=int(data.get("n", 0)),
            m=int(data.get("m", 0)),
        )


def check_identifiable(data: LongData) -> None:
    """Raise :class:`IdentifiabilityError` naming the offending design column."""
    for j, name in enumerate(data.fixed_names):
        col = data.x[:, j]
        if name != "intercept" and np.ptp(col) == 0:
            raise IdentifiabilityError(f"fixed-effect column {name!r} has no variation")
    for j, name in enumerate(data.random_names):
        if not np.any(data.z[:, j]):
            raise IdentifiabilityError(f"random-effect column {name!r} is identically zero")
    rank = np.linalg.matrix_rank(data.x)
    if rank < data.x.shape[1]:
        for j, name in enumerate(data.fixed_names):
            rest = np.delete(data.x, j, axis=1)
            if np.linalg.matrix_rank(rest) == rank:
                raise IdentifiabilityError(f"fixed-effect column {name!r} is collinear with the others")
        raise IdentifiabilityError("fixed-effect design is rank deficient")


def _start_values(data: LongData, stats: _Stats):
    """Moment starting values from per-individual least squares, else a 50/25/25 split."""
    q = stats.q
    xz = np.column_stack([data.z, data.x[:, [j for j, nm in enumerate(data.fixed_names)
                                             if nm not in data.random_names]]])
    coefs, resid_vars, sampling = [], [], []
    for s, e in zip(data.offsets[:-1], data.offsets[1:]):
        design, y = xz[s:e], data.y[s:e]
        if e - s <= design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
            continue
        gram_inv = np.linalg.inv(design.T @ design)
        coef = gram_inv @ design.T @ y
        resid = y - design @ coef
        coefs.append(coef[:q])
        resid_vars.append(resid @ resid / (e - s - design.shape[1]))
        sampling.append(np.diag(gram_inv)[:q])
    total_var = float(np.var(data.y)) or 1.0
    if q and len(coefs) >= max(10, 2 * q):
        coefs = np.array(coefs)
        s2 = float(np.mean(resid_vars))
        tau2 = np.var(coefs, axis=0, ddof=1) - s2 * np.mean(sampling, axis=0)
        tau2 = np.maximum(tau2, 0.01 * np.var(coefs, axis=0, ddof=1) + 1e-8)
        if s2 > 0 and np.all(np.isfinite(tau2)):
            return np.diag(tau2), math.sqrt(s2)
    split = np.array([0.5, 0.25, 0.25])[[RANDOM_TERMS.index(nm) for nm in data.random_names]]
    return np.diag(split * total_var), 1.0


def _fd_gradient(f, theta, step):
    """Central differences refined by one Richardson extrapolation."""
    d = theta.size
    grad = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        coarse = (f(theta + e) - f(theta - e)) / (2 * step)
        fine = (f(theta + 0.5 * e) - f(theta - 0.5 * e)) / step
        grad[i] = (4.0 * fine - coarse) / 3.0
    return grad


def _fd_hessian(f, theta, step):
    d = theta.size
    f0 = f(theta)
    hess = np.zeros((d, d))
    eye = step * np.eye(d)
    for i in range(d):
        hess[i, i] = (f(theta + eye[i]) - 2 * f0 + f(theta - eye[i])) / step**2
        for j in range(i + 1, d):
            val = (f(theta + eye[i] + eye[j]) - f(theta + eye[i] - eye[j])
                   - f(theta - eye[i] + eye[j]) + f(theta - eye[i] - eye[j])) / (4 * step**2)
            hess[i, j] = hess[j, i] = val
    return hess


def _active_gradient(grad, theta, bounds):
    """Projected gradient: components pushing against an active bound are dropped."""
    g = grad.copy()
    for i, (lo, hi) in enumerate(bounds):
        if theta[i] <= lo + 1e-8 and g[i] < 0:
            g[i] = 0.0
        if theta[i] >= hi - 1e-8 and g[i] > 0:
            g[i] = 0.0
    return g


def fit_lmm_reml(panel_view, spec: ModelSpec | None = None, opts: FitOptions | None = None) -> RemlFit:
    """Fit fixed effects and variance components by REML.

    Nelder-Mead on the log-sd (diagonal) or log-Cholesky (unstructured)
    parameters, followed by Newton steps on finite-difference derivatives
    that are kept only if they do not lower the objective.  The reported
    ``gradient_norm`` is the projected finite-difference gradient divided by
    the number of individuals (the average per-individual score); the fit is
    flagged ``converged`` when it is below ``opts.gradient_tol``.
    """
    if spec is None:
        kind = panel_view.params.kind if isinstance(panel_view, Panel) else ScmKind.GAUSSIAN
        spec = ModelSpec.for_kind(kind)
    opts = opts or FitOptions()
    data = panel_view if isinstance(panel_view, LongData) else long_data(panel_view, spec)
    check_identifiable(data)
    stats = _stats(data)
    q = stats.q
    structure = spec.random_cov_structure

    def objective(theta):
        cov, sigma = _unpack(theta, q, structure)
        return _profile(stats, cov, sigma)[0]

    cov0, sigma0 = _start_values(data, stats)
    theta0 = _pack(cov0, sigma0, structure)
    bounds = _bounds(theta0, q, structure, math.sqrt(max(float(np.var(data.y)), 1e-12)))
    theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
    trace = [objective(theta0)]
    if not np.isfinite(trace[0]):
        cov0, sigma0 = np.diag(np.full(q, max(float(np.var(data.y)), 1e-6))), 1.0
        theta0 = _pack(cov0, sigma0, structure)
        trace = [objective(theta0)]

    # simplex tolerances are relative to the objective scale at the start
    scale = max(1.0, abs(trace[0])) if np.isfinite(trace[0]) else 1.0

    def neg(theta):
        val = objective(theta)
        return 1e300 if not np.isfinite(val) else -val / scale

    def record(xk, *_):
        val = objective(xk)
        if val >= trace[-1]:
            trace.append(val)

    res = minimize(neg, theta0, method="Nelder-Mead", bounds=bounds, callback=record,
                   options={"xatol": opts.xatol, "fatol": opts.fatol, "maxiter": opts.max_iter,
                            "maxfev": 4 * opts.max_iter, "adaptive": theta0.size > 4})
    theta = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds])
    best = objective(theta)
    if best < trace[-1]:
        theta, best = theta0, trace[-1]
    elif best > trace[-1]:
        trace.append(best)
    n_iter = int(res.nit)

    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    grad = np.zeros_like(theta)
    for _ in range(opts.polish_steps):
        grad = _fd_gradient(objective, theta, opts.fd_step)
        pg = _active_gradient(grad, theta, bounds)
        if np.linalg.norm(pg) / data.n < opts.gradient_tol * 1e-2:
            break
        free = pg != 0
        hess = _fd_hessian(objective, theta, opts.fd_step)
        step = np.zeros_like(theta)
        try:
            hf = hess[np.ix_(free, free)]
            w, v = np.linalg.eigh(-hf)
            w = np.maximum(w, 1e-8 * max(1.0, np.abs(w).max()))
            step[free] = v @ ((v.T @ pg[free]) / w)
        except np.linalg.LinAlgError:
            step = pg
        accepted = False
        for shrink in (1.0, 0.5, 0.25, 0.1, 0.01):
            cand = np.clip(theta + shrink * step, lo, hi)
            val = objective(cand)
            if val >= best and np.any(cand != theta):
                theta, best, accepted = cand, val, True
                trace.append(best)
                n_iter += 1
                break
        if not accepted:
            break
    # a component that drifted to the flat region next to zero is moved onto the
    # bound when that leaves the objective unchanged
    for i in range(q):
        if _LOG_FLOOR < theta[i] < _LOG_FLOOR + 2.0:
            cand = theta.copy()
            cand[i] = _LOG_FLOOR
            val = objective(cand)
            if val >= best - 1e-12 * scale:
                theta, best = cand, max(best, val)
    grad = _fd_gradient(objective, theta, opts.fd_step)
    gnorm = float(np.linalg.norm(_active_gradient(grad, theta, bounds))) / data.n

    cov, sigma = _unpack(theta, q, structure)
    # components pinned at the lower bound are reported as exactly zero
    small = np.sqrt(np.clip(np.diag(cov), 0.0, None)) < _ZERO_CUTOFF * (1 + 1e-9)
    cov[small, :] = 0.0
    cov[:, small] = 0.0
    _, (beta, xvx) = _profile(stats, cov, sigma)
    return RemlFit(spec=spec, fixed_names=data.fixed_names, random_names=data.random_names,
                   beta_hat=beta, random_cov=cov, sigma_hat=sigma, restricted_loglik=best,
                   converged=bool(gnorm < opts.gradient_tol and np.isfinite(best)), n_iter=n_iter,
                   gradient_norm=gnorm, beta_cov=np.linalg.inv(xvx), n=data.n,
                   m=int(np.max(np.diff(data.offsets))), trace=trace)


@dataclass(frozen=True)
class NaiveFit:
    fixed_names: tuple
    beta_hat: np.ndarray

    def fixed(self, name: str) -> float:
        return float(self.beta_hat[self.fixed_names.index(name)]) if name in self.fixed_names else 0.0

    def implied_ace(self, regime=(1, 1)) -> float:
        a1 = regime[-1]
        a2 = regime[-2] if len(regime) > 1 else 0
        return float(a1 * self.fixed("lag1") + a2 * self.fixed("lag2"))


def fit_naive_pooled(panel_view, spec: ModelSpec | None = None) -> NaiveFit:
    """Pooled ordinary least squares of the outcome on the fixed-effect design."""
    if spec is None:
        kind = panel_view.params.kind if isinstance(panel_view, Panel) else ScmKind.GAUSSIAN
        spec = ModelSpec.for_kind(kind)
    data = panel_view if isinstance(panel_view, LongData) else long_data(panel_view, spec)
    check_identifiable(data)
    beta, *_ = np.linalg.lstsq(data.x, data.y, rcond=None)
    return NaiveFit(data.fixed_names, beta)
