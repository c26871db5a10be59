"""Maximum-likelihood estimation of covariance-structure models."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..specfun import norm_two_sided_p
from ..stats import significance_stars
from .indices import FitIndices, fit_indices, independence_chi_square
from .model import BETA, LAMBDA, PSI, THETA, MLObjective, SemModel
from .optimize import ConvergenceError, bfgs
from .syntax import ModelSpec

logger = logging.getLogger(__name__)

HEYWOOD_FLOOR = 1e-6


class SemDataError(ValueError):
    pass


class SemConvergenceError(RuntimeError):
    def __init__(self, message, theta=None, fml=None, iterations=None):
        super().__init__(message)
        self.theta = theta
        self.fml = fml
        self.iterations = iterations


class HeywoodWarning(UserWarning):
    pass


@dataclass
class FitOptions:
    cfa: bool = False
    max_iter: int = 2000
    gtol: float = 1e-6
    ftol: float = 1e-10
    standard_errors: bool = True
    start: np.ndarray | None = None
    inv_hessian: np.ndarray | None = None


@dataclass
class ParameterEstimate:
    lhs: str
    op: str
    rhs: str
    estimate: float
    se: float
    z: float
    p: float
    std: float
    free: bool

    @property
    def stars(self):
        return "" if math.isnan(self.p) else significance_stars(self.p)

    def to_dict(self):
        return {"lhs": self.lhs, "op": self.op, "rhs": self.rhs, "estimate": self.estimate,
                "se": self.se, "z": self.z, "p": self.p, "std": self.std,
                "stars": self.stars, "free": self.free}


@dataclass
class SemFit:
    model: SemModel
    theta: np.ndarray
    estimates: list
    fit: FitIndices
    S: np.ndarray
    sigma: np.ndarray
    n: int
    fml: float
    latent_corr: pd.DataFrame
    iterations: int
    grad_norm: float
    message: str
    heywood: list = field(default_factory=list)
    inv_hessian: np.ndarray | None = field(default=None, repr=False)

    @property
    def spec(self) -> ModelSpec:
        return self.model.spec

    @property
    def chi_square(self):
        return self.fit.chi_square

    @property
    def df(self):
        return self.fit.df

    def estimate(self, lhs, op, rhs) -> ParameterEstimate:
        for e in self.estimates:
            if (e.lhs, e.op, e.rhs) == (lhs, op, rhs):
                return e
        if op == "~~":
            for e in self.estimates:
                if (e.lhs, e.op, e.rhs) == (rhs, op, lhs):
                    return e
        raise KeyError(f"model has no parameter {lhs} {op} {rhs}")

    def path(self, target, predictor) -> ParameterEstimate:
        return self.estimate(target, "~", predictor)

    def std_loadings(self):
        return {(e.lhs, e.rhs): e.std for e in self.estimates if e.op == "=~"}

    def to_dict(self):
        return {
            "estimates": [e.to_dict() for e in self.estimates],
            "fit": self.fit.to_dict(),
            "fml": self.fml,
            "n": self.n,
            "latent_correlations": {
                "names": list(self.latent_corr.columns),
                "matrix": self.latent_corr.to_numpy().tolist(),
            },
            "convergence": {"iterations": self.iterations, "grad_norm": self.grad_norm,
                            "message": self.message},
            "heywood": list(self.heywood),
        }


def sample_covariance(X):
    X = np.asarray(X, dtype=float)
    return np.cov(X, rowvar=False, ddof=1)


def _check_pd(S, names):
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        var = np.diag(S)
        const = [n for n, v in zip(names, var) if v <= 0]
        hint = f" (constant columns: {const})" if const else ""
        raise SemDataError(
            "sample covariance matrix is not positive definite; check for collinear "
            "or duplicated indicators" + hint) from None


def start_values(model: SemModel, X):
    """Marker-scaled starts: standardized loadings 0.7, error variances half the item variance."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0, ddof=1)
    var = sd ** 2
    obs = model.obs_index
    spec = model.spec
    scale = {}
    means = []
    for v in model.latent_names:
        items = spec.measurement.get(v, [v])
        cols = [obs[it] for it in items]
        marker_sd = sd[cols[0]]
        scale[v] = marker_sd if v in model.single_indicator else 0.7 * marker_sd
        means.append(X[:, cols].mean(axis=1))
    means = np.column_stack(means)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.corrcoef(means, rowvar=False)
    r = np.nan_to_num(np.atleast_2d(r))
    np.fill_diagonal(r, 1.0)
    lat = model.lat_index
    theta = np.zeros(model.n_free)
    for k, fp in enumerate(model.free):
        if fp.matrix == LAMBDA:
            marker = spec.measurement[fp.lhs][0]
            theta[k] = sd[fp.row] / sd[obs[marker]]
        elif fp.matrix == BETA:
            theta[k] = 0.0
        elif fp.matrix == THETA:
            theta[k] = 0.5 * var[fp.row]
        elif fp.matrix == PSI:
            a, b = model.latent_names[fp.row], model.latent_names[fp.col]
            if fp.row == fp.col:
                theta[k] = scale[a] ** 2
            else:
                shrink = 0.9 if fp.row < model.n_xi else 0.5
                theta[k] = shrink * r[lat[a], lat[b]] * scale[a] * scale[b]
    return theta


def numerical_hessian(grad, x, rel_step=1e-4):
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        gp, gm = grad(x + e), grad(x - e)
        if gp is None or gm is None:
            H[:, i] = np.nan
            continue
        H[:, i] = (gp - gm) / (2.0 * h)
    return 0.5 * (H + H.T)


def standardized(model: SemModel, theta):
    """Standardized value of every free and fixed parameter, keyed like estimates."""
    lam, beta, psi, th = model.matrices(theta)
    T = model.reduced_form(beta)
    C = T @ psi @ T.T
    sigma = lam @ C @ lam.T + th
    sd_lat = np.sqrt(np.clip(np.diag(C), 1e-300, None))
    sd_obs = np.sqrt(np.clip(np.diag(sigma), 1e-300, None))
    out = {}
    for v in model.latent_names:
        j = model.lat_index[v]
        for it in model.spec.measurement.get(v, [v]):
            i = model.obs_index[it]
            out[(v, "=~", it)] = lam[i, j] * sd_lat[j] / sd_obs[i]
    for fp in model.free:
        if fp.matrix == BETA:
            out[(fp.lhs, "~", fp.rhs)] = beta[fp.row, fp.col] * sd_lat[fp.col] / sd_lat[fp.row]
        elif fp.matrix == PSI:
            out[(fp.lhs, "~~", fp.rhs)] = psi[fp.row, fp.col] / (sd_lat[fp.row] * sd_lat[fp.col])
        elif fp.matrix == THETA:
            out[(fp.lhs, "~~", fp.rhs)] = th[fp.row, fp.row] / sd_obs[fp.row] ** 2
    corr = C / np.outer(sd_lat, sd_lat)
    return out, corr


def optimize_model(model: SemModel, S, options: FitOptions, start=None):
    objective = MLObjective(model, S)
    theta0 = start if start is not None else options.start
    if theta0 is None or not np.isfinite(objective.value(theta0)):
        raise ValueError("start vector is required and must be feasible")
    try:
        res = bfgs(objective.value_and_gradient, theta0, max_iter=options.max_iter,
                   gtol=options.gtol, ftol=options.ftol, H0=options.inv_hessian)
    except ConvergenceError as exc:
        best = exc.result
        raise SemConvergenceError(str(exc), best.x, best.fun, best.iterations) from None
    if not res.converged:
        if res.grad_norm < 1e-4:
            logger.debug("line search stalled at |g|=%.2e; accepting", res.grad_norm)
        else:
            raise SemConvergenceError(f"{res.message} (|g|={res.grad_norm:.2e})", res.x, res.fun, res.iterations)
    return objective, res


def fit_model(model: SemModel, X, options: FitOptions | None = None) -> SemFit:
    """Fit ``model`` to the raw data matrix ``X`` (columns in ``model.observed_names`` order)."""
    options = options or FitOptions()
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise SemDataError("need at least two rows")
    S = sample_covariance(X)
    _check_pd(S, model.observed_names)
    if model.df < 0:
        raise SemDataError(f"model is not identified: df = {model.df}")
    start = options.start if options.start is not None else start_values(model, X)
    objective, res = optimize_model(model, S, options, start)
    theta = res.x.copy()

    heywood = []
    for k, fp in enumerate(model.free):
        if fp.is_variance and theta[k] < HEYWOOD_FLOOR:
            heywood.append(fp.label)
            theta[k] = HEYWOOD_FLOOR
    if heywood:
        warnings.warn(f"negative variance estimates floored at {HEYWOOD_FLOOR}: {heywood}",
                      HeywoodWarning, stacklevel=2)
    fml = objective.value(theta)
    if not np.isfinite(fml):
        fml = res.fun
        theta = res.x.copy()

    sigma = model.implied(theta)
    chi2 = (n - 1) * max(fml, 0.0)
    base_chi2, base_df = independence_chi_square(S, n)
    fit = fit_indices(chi2, model.df, n, base_chi2, base_df, S, sigma)

    if options.standard_errors:
        H = 0.5 * (n - 1) * numerical_hessian(objective.gradient, theta)
        try:
            cov = np.linalg.inv(H)
            se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
        except np.linalg.LinAlgError:
            warnings.warn("information matrix is singular; standard errors unavailable", stacklevel=2)
            se = np.full(model.n_free, np.nan)
    else:
        se = np.full(model.n_free, np.nan)

    std, corr = standardized(model, theta)
    estimates = []
    lam = model.matrices(theta)[0]
    free_keys = {(fp.lhs, fp.op, fp.rhs): k for k, fp in enumerate(model.free)}
    for v in model.latent_names:
        j = model.lat_index[v]
        for it in model.spec.measurement.get(v, [v]):
            key = (v, "=~", it)
            if key in free_keys:
                continue
            estimates.append(ParameterEstimate(v, "=~", it, float(lam[model.obs_index[it], j]),
                                               math.nan, math.nan, math.nan, float(std[key]), False))
    for k, fp in enumerate(model.free):
        key = (fp.lhs, fp.op, fp.rhs)
        est = float(theta[k])
        z = est / se[k] if se[k] > 0 else math.nan
        p = norm_two_sided_p(z) if not math.isnan(z) else math.nan
        estimates.append(ParameterEstimate(*key, est, float(se[k]), z, p, float(std[key]), True))
    order = {"=~": 0, "~": 1, "~~": 2}
    estimates.sort(key=lambda e: order[e.op])
    latent_corr = pd.DataFrame(corr, index=model.latent_names, columns=model.latent_names)
    return SemFit(model=model, theta=theta, estimates=estimates, fit=fit, S=S, sigma=sigma, n=n,
                  fml=float(fml), latent_corr=latent_corr, iterations=res.iterations,
                  grad_norm=res.grad_norm, message=res.message, heywood=heywood,
                  inv_hessian=res.inv_hessian)


def fit_ml(spec: ModelSpec, data, options: FitOptions | None = None) -> SemFit:
    """Maximum-likelihood fit of ``spec`` to a :class:`~semann.ingest.Dataset`."""
    options = options or FitOptions()
    model = SemModel(spec, cfa=options.cfa)
    X = data.matrix(model.observed_names)
    return fit_model(model, X, options)


def fit_cfa(spec: ModelSpec, data, **kwargs) -> SemFit:
    return fit_ml(spec, data, FitOptions(cfa=True, **kwargs))
