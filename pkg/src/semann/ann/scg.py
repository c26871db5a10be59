"""Moller's scaled conjugate gradient for network training."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .network import AnnConfig, AnnModel, MinMaxScaler, init_weights, layer_sizes, mse_and_gradient, n_weights


class AnnTrainingError(RuntimeError):
    def __init__(self, message, iteration):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class ScgResult:
    x: np.ndarray
    fun: float
    iterations: int
    message: str
    history: list


def scg(fg, w0, max_iter=1000, gtol=1e-6, ftol=1e-12, sigma=1e-4, lam=1e-6):
    """Minimize ``fg(w) -> (f, g)`` with Moller's scaled conjugate gradient.

    A secant estimate of the Hessian-vector product along the search direction
    replaces the line search, and a Levenberg-Marquardt style scale ``lam``
    keeps the local quadratic model positive definite. ``history`` holds the
    objective after each accepted step.
    """
    w = np.array(w0, dtype=float)
    n = w.size
    f, g = fg(w)
    if not np.isfinite(f):
        raise AnnTrainingError("non-finite loss", 0)
    r = -g
    p = r.copy()
    lam_bar = 0.0
    success = True
    history = [f]
    k_since_restart = 0
    delta = 0.0
    for it in range(1, max_iter + 1):
        p2 = p @ p
        if p2 == 0.0:
            return ScgResult(w, f, it - 1, "zero search direction", history)
        if success:
            sig = sigma / np.sqrt(p2)
            _, g_sig = fg(w + sig * p)
            s = (g_sig - g) / sig
            delta = p @ s
        # scale the curvature; the increments persist across rejected steps
        delta += (lam - lam_bar) * p2
        if delta <= 0:
            # force a positive definite local model
            lam_bar = 2.0 * (lam - delta / p2)
            delta = -delta + lam * p2
            lam = lam_bar
        mu = p @ r
        alpha = mu / delta
        w_new = w + alpha * p
        f_new, g_new = fg(w_new)
        if not np.isfinite(f_new):
            raise AnnTrainingError("non-finite loss", it)
        comparison = 2.0 * delta * (f - f_new) / (mu * mu) if mu != 0 else -1.0
        if comparison >= 0:
            change = f - f_new
            w, f, g = w_new, f_new, g_new
            history.append(f)
            r_new = -g
            lam_bar = 0.0
            success = True
            k_since_restart += 1
            if np.sqrt(g @ g) < gtol:
                return ScgResult(w, f, it, "gradient below tolerance", history)
            if abs(change) < ftol:
                return ScgResult(w, f, it, "error change below tolerance", history)
            if k_since_restart >= n:
                p = r_new
                k_since_restart = 0
            else:
                beta = (r_new @ r_new - r_new @ r) / mu
                p = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                lam = 0.25 * lam
        else:
            lam_bar = lam
            success = False
        if comparison < 0.25:
            lam = lam + delta * (1.0 - comparison) / p2
        lam = min(lam, 1e100)
    return ScgResult(w, f, max_iter, "iteration cap reached", history)


def train_scg(inputs, target, config: AnnConfig | None = None, rng=None, feature_names=None):
    """Fit the network to ``(inputs, target)`` and return an :class:`AnnModel`.

    Inputs and target are min-max scaled to [0.05, 0.95] from the training
    rows; weights start uniform in [-0.5, 0.5].
    """
    config = config or AnnConfig()
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(target, dtype=float).ravel()
    if len(X) != len(y):
        raise ValueError("inputs and target have different row counts")
    sizes = layer_sizes(X.shape[1], config.hidden_sizes)
    n_w = n_weights(sizes)
    if len(y) < 2 * n_w / 10:
        warnings.warn(f"{len(y)} training rows for {n_w} weights; the network may overfit", stacklevel=2)
    x_scaler = MinMaxScaler.fit(X, "input")
    y_scaler = MinMaxScaler.fit(y[:, None], "target")
    Xs = x_scaler.transform(X)
    ys = y_scaler.transform(y[:, None])[:, 0]
    if rng is None:
        rng = np.random.default_rng(config.seed)
    w0 = init_weights(sizes, rng)
    res = scg(lambda w: mse_and_gradient(w, sizes, Xs, ys), w0, max_iter=config.max_iterations)
    names = list(feature_names) if feature_names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    return AnnModel(sizes, res.x, x_scaler, y_scaler, names, res.iterations, res.fun, res.message)
