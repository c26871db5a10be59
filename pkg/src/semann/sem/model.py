"""Covariance-structure model.

Parameters are held in LISREL form (x indicators load on exogenous latents,
y indicators on endogenous latents)::

    x   = Lx xi + delta
    y   = Ly eta + eps
    eta = A eta + B xi + zeta

Internally the estimator uses the equivalent single-block form with the
latent vector ``[xi; eta]``, so one set of gradient formulas covers both.
Observed regressors (demographic controls, the accepted-gap outcome) enter
as single-indicator latents with unit loading and zero error variance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .syntax import ModelSpec


class StructuralSingularityError(np.linalg.LinAlgError):
    pass


@dataclass
class SemParameters:
    lambda_x: np.ndarray
    lambda_y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    theta_delta: np.ndarray
    theta_epsilon: np.ndarray
    x_names: list = field(default_factory=list)
    y_names: list = field(default_factory=list)
    xi_names: list = field(default_factory=list)
    eta_names: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("lambda_x", "lambda_y", "A", "B", "phi", "psi", "theta_delta", "theta_epsilon"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n_xi, n_eta = self.phi.shape[0], self.psi.shape[0]
        px, py = self.theta_delta.shape[0], self.theta_epsilon.shape[0]
        if n_xi == 0 or self.lambda_x.size == 0:
            self.lambda_x = self.lambda_x.reshape(px, n_xi)
        if n_eta == 0 or self.lambda_y.size == 0:
            self.lambda_y = self.lambda_y.reshape(py, n_eta)
        if self.B.size == 0:
            self.B = self.B.reshape(n_eta, n_xi)
        if self.A.size == 0:
            self.A = self.A.reshape(n_eta, n_eta)
        checks = [
            (self.lambda_x.shape, (px, n_xi), "lambda_x"),
            (self.lambda_y.shape, (py, n_eta), "lambda_y"),
            (self.A.shape, (n_eta, n_eta), "A"),
            (self.B.shape, (n_eta, n_xi), "B"),
        ]
        for got, want, name in checks:
            if got != want:
                raise ValueError(f"{name} has shape {got}, expected {want}")

    @property
    def observed_names(self):
        return list(self.x_names) + list(self.y_names)

    @property
    def latent_names(self):
        return list(self.xi_names) + list(self.eta_names)

    def _reduced_form(self):
        n_eta = self.A.shape[0]
        ia = np.eye(n_eta) - self.A
        try:
            return np.linalg.inv(ia) if n_eta else ia
        except np.linalg.LinAlgError as exc:
            raise StructuralSingularityError("(I - A) is singular") from exc

    def latent_covariance(self):
        """Covariance of ``[xi; eta]``."""
        n_xi, n_eta = self.phi.shape[0], self.A.shape[0]
        if n_eta and abs(np.linalg.det(np.eye(n_eta) - self.A)) < 1e-12:
            raise StructuralSingularityError("(I - A) is singular")
        T = self._reduced_form()
        cov_eta = T @ (self.B @ self.phi @ self.B.T + self.psi) @ T.T
        cov_eta_xi = T @ self.B @ self.phi
        out = np.empty((n_xi + n_eta, n_xi + n_eta))
        out[:n_xi, :n_xi] = self.phi
        out[n_xi:, n_xi:] = cov_eta
        out[n_xi:, :n_xi] = cov_eta_xi
        out[:n_xi, n_xi:] = cov_eta_xi.T
        return 0.5 * (out + out.T)

    def to_single_block(self):
        """(Lambda, Beta, Psi, Theta) over latents ``[xi; eta]`` and observed ``[x; y]``."""
        n_xi, n_eta = self.phi.shape[0], self.A.shape[0]
        px, py = self.theta_delta.shape[0], self.theta_epsilon.shape[0]
        lam = np.zeros((px + py, n_xi + n_eta))
        lam[:px, :n_xi] = self.lambda_x
        lam[px:, n_xi:] = self.lambda_y
        beta = np.zeros((n_xi + n_eta, n_xi + n_eta))
        beta[n_xi:, :n_xi] = self.B
        beta[n_xi:, n_xi:] = self.A
        psi = np.zeros_like(beta)
        psi[:n_xi, :n_xi] = self.phi
        psi[n_xi:, n_xi:] = self.psi
        theta = np.zeros((px + py, px + py))
        theta[:px, :px] = self.theta_delta
        theta[px:, px:] = self.theta_epsilon
        return lam, beta, psi, theta


def implied_covariance(params: SemParameters) -> np.ndarray:
    """Model-implied covariance of ``[x; y]`` from the partitioned LISREL formulas."""
    px = params.theta_delta.shape[0]
    T = params._reduced_form()
    if params.A.shape[0] and abs(np.linalg.det(np.eye(params.A.shape[0]) - params.A)) < 1e-12:
        raise StructuralSingularityError("(I - A) is singular")
    lx, ly = params.lambda_x, params.lambda_y
    cov_eta = T @ (params.B @ params.phi @ params.B.T + params.psi) @ T.T
    sxx = lx @ params.phi @ lx.T + params.theta_delta
    syy = ly @ cov_eta @ ly.T + params.theta_epsilon
    syx = ly @ T @ params.B @ params.phi @ lx.T
    p = px + params.theta_epsilon.shape[0]
    sigma = np.empty((p, p))
    sigma[:px, :px] = sxx
    sigma[px:, px:] = syy
    sigma[px:, :px] = syx
    sigma[:px, px:] = syx.T
    return 0.5 * (sigma + sigma.T)


# matrix ids of the single-block representation
LAMBDA, BETA, PSI, THETA = "lambda", "beta", "psi", "theta"


@dataclass(frozen=True)
class FreeParameter:
    matrix: str
    row: int
    col: int
    lhs: str
    op: str
    rhs: str

    @property
    def symmetric(self):
        return self.matrix in (PSI, THETA) and self.row != self.col

    @property
    def is_variance(self):
        return self.matrix in (PSI, THETA) and self.row == self.col

    @property
    def label(self):
        return f"{self.lhs} {self.op} {self.rhs}"


class SemModel:
    """Parameter layout of a :class:`ModelSpec` over a fixed set of observed columns.

    ``cfa=True`` drops all regressions and observed regressors and frees every
    construct covariance (measurement model only).
    """

    def __init__(self, spec: ModelSpec, cfa=False):
        self.spec = spec.measurement_only() if cfa else spec
        self.cfa = cfa
        spec = self.spec
        endo = set(spec.endogenous)
        order = spec.topological_order()
        self.xi_names = [v for v in order if v not in endo]
        self.eta_names = [v for v in order if v in endo]
        self.latent_names = self.xi_names + self.eta_names
        single = {v for v in spec.variables if v not in spec.measurement or len(spec.measurement[v]) == 1}
        self.single_indicator = single

        def indicators(v):
            return spec.measurement.get(v, [v])

        self.x_names = [it for v in self.xi_names for it in indicators(v)]
        self.y_names = [it for v in self.eta_names for it in indicators(v)]
        self.observed_names = self.x_names + self.y_names
        p, m = len(self.observed_names), len(self.latent_names)
        self.n_xi = len(self.xi_names)
        self.px = len(self.x_names)
        obs_index = {n: i for i, n in enumerate(self.observed_names)}
        lat_index = {n: i for i, n in enumerate(self.latent_names)}
        self.obs_index, self.lat_index = obs_index, lat_index

        self.lam0 = np.zeros((p, m))
        self.beta0 = np.zeros((m, m))
        self.psi0 = np.zeros((m, m))
        self.theta0 = np.zeros((p, p))
        free = []
        for v in self.latent_names:
            j = lat_index[v]
            items = indicators(v)
            self.lam0[obs_index[items[0]], j] = 1.0
            for it in items[1:]:
                free.append(FreeParameter(LAMBDA, obs_index[it], j, v, "=~", it))
        for v in self.latent_names:
            for pred in spec.predictors_of(v):
                free.append(FreeParameter(BETA, lat_index[v], lat_index[pred], v, "~", pred))
        for a_i, a in enumerate(self.xi_names):
            free.append(FreeParameter(PSI, a_i, a_i, a, "~~", a))
            for b in self.xi_names[:a_i]:
                b_i = lat_index[b]
                free.append(FreeParameter(PSI, a_i, b_i, b, "~~", a))
        for v in self.eta_names:
            j = lat_index[v]
            free.append(FreeParameter(PSI, j, j, v, "~~", v))
        for a, b in spec.covariances:
            if a in endo and b in endo:
                i, j = sorted((lat_index[a], lat_index[b]), reverse=True)
                free.append(FreeParameter(PSI, i, j, self.latent_names[j], "~~", self.latent_names[i]))
        for v in self.latent_names:
            if v in single:
                continue
            for it in indicators(v):
                i = obs_index[it]
                free.append(FreeParameter(THETA, i, i, it, "~~", it))
        self.free = free
        self.n_free = len(free)
        self.n_observed = p
        self.n_latent = m
        self._index = {mat: ([], [], []) for mat in (LAMBDA, BETA, PSI, THETA)}
        for k, fp in enumerate(free):
            rows, cols, ks = self._index[fp.matrix]
            rows.append(fp.row)
            cols.append(fp.col)
            ks.append(k)
        self._index = {mat: tuple(np.asarray(a, dtype=int) for a in v) for mat, v in self._index.items()}
        self._sym_psi = np.array([fp.matrix == PSI and fp.row != fp.col for fp in free])
        self.variance_mask = np.array([fp.is_variance for fp in free])

    @property
    def df(self):
        p = self.n_observed
        return p * (p + 1) // 2 - self.n_free

    def matrices(self, theta):
        lam, beta, psi, th = self.lam0.copy(), self.beta0.copy(), self.psi0.copy(), self.theta0.copy()
        for mat, target in ((LAMBDA, lam), (BETA, beta), (PSI, psi), (THETA, th)):
            rows, cols, ks = self._index[mat]
            if len(ks):
                target[rows, cols] = theta[ks]
                if mat in (PSI, THETA):
                    target[cols, rows] = theta[ks]
        return lam, beta, psi, th

    def to_parameters(self, theta) -> SemParameters:
        lam, beta, psi, th = self.matrices(theta)
        nx, px = self.n_xi, self.px
        return SemParameters(
            lambda_x=lam[:px, :nx], lambda_y=lam[px:, nx:],
            A=beta[nx:, nx:], B=beta[nx:, :nx],
            phi=psi[:nx, :nx], psi=psi[nx:, nx:],
            theta_delta=th[:px, :px], theta_epsilon=th[px:, px:],
            x_names=list(self.x_names), y_names=list(self.y_names),
            xi_names=list(self.xi_names), eta_names=list(self.eta_names))

    def from_parameters(self, params: SemParameters):
        """Free-parameter vector read out of LISREL matrices laid out like this model."""
        lam, beta, psi, th = params.to_single_block()
        src = {LAMBDA: lam, BETA: beta, PSI: psi, THETA: th}
        return np.array([src[fp.matrix][fp.row, fp.col] for fp in self.free])

    def reduced_form(self, beta):
        m = beta.shape[0]
        ib = np.eye(m) - beta
        try:
            T = np.linalg.solve(ib, np.eye(m))
        except np.linalg.LinAlgError as exc:
            raise StructuralSingularityError("(I - A) is singular") from exc
        return T

    def latent_covariance(self, theta):
        lam, beta, psi, th = self.matrices(theta)
        T = self.reduced_form(beta)
        return T @ psi @ T.T

    def implied(self, theta):
        lam, beta, psi, th = self.matrices(theta)
        T = self.reduced_form(beta)
        LT = lam @ T
        sigma = LT @ psi @ LT.T + th
        return 0.5 * (sigma + sigma.T)


class MLObjective:
    """F_ML(theta) = ln|Sigma| + tr(S Sigma^-1) - ln|S| - p and its gradient."""

    def __init__(self, model: SemModel, S):
        self.model = model
        self.S = np.asarray(S, dtype=float)
        self.p = self.S.shape[0]
        sign, self.logdet_s = np.linalg.slogdet(self.S)
        if sign <= 0:
            raise np.linalg.LinAlgError("sample covariance is not positive definite")

    def _parts(self, theta):
        lam, beta, psi, th = self.model.matrices(theta)
        m = beta.shape[0]
        T = np.linalg.solve(np.eye(m) - beta, np.eye(m))
        LT = lam @ T
        sigma = LT @ psi @ LT.T + th
        sigma = 0.5 * (sigma + sigma.T)
        return lam, psi, T, LT, sigma

    def value(self, theta):
        try:
            *_, sigma = self._parts(theta)
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            return np.inf
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        sinv_s = np.linalg.solve(chol.T, np.linalg.solve(chol, self.S))
        return float(logdet + np.trace(sinv_s) - self.logdet_s - self.p)

    def value_and_gradient(self, theta):
        try:
            lam, psi, T, LT, sigma = self._parts(theta)
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            return np.inf, None
        model = self.model
        eye = np.eye(self.p)
        cinv = np.linalg.solve(chol, eye)
        sinv = cinv.T @ cinv
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        sinv_s = sinv @ self.S
        f = float(logdet + np.trace(sinv_s) - self.logdet_s - self.p)
        W = sinv - sinv_s @ sinv
        W = 0.5 * (W + W.T)
        C = T @ psi @ T.T
        M = LT.T @ W @ LT
        grads = {
            LAMBDA: 2.0 * W @ lam @ C,
            BETA: 2.0 * M @ psi @ T.T,
            PSI: M,
            THETA: W,
        }
        g = np.empty(model.n_free)
        for mat, G in grads.items():
            rows, cols, ks = model._index[mat]
            if len(ks):
                g[ks] = G[rows, cols]
        g[model._sym_psi] *= 2.0
        # THETA is diagonal-only, so no off-diagonal doubling is needed there
        return f, g

    def gradient(self, theta):
        return self.value_and_gradient(theta)[1]
