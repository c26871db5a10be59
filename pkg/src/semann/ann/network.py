"""Two-hidden-layer sigmoid perceptron with min-max scaling and backpropagation."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
SCALE_LO, SCALE_HI = 0.05, 0.95


class AnnConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnnConfig:
    hidden_sizes: tuple = (8, 4)
    max_iterations: int = 1000
    folds: int = 10
    seed: int = 0
    shuffles: int = 10

    def __post_init__(self):
        hs = tuple(int(h) for h in self.hidden_sizes)
        if len(hs) != 2 or min(hs) < 1:
            raise AnnConfigError(f"hidden_sizes must be two positive integers, got {self.hidden_sizes}")
        object.__setattr__(self, "hidden_sizes", hs)
        if self.folds < 2:
            raise AnnConfigError("folds must be at least 2")
        if self.max_iterations < 1:
            raise AnnConfigError("max_iterations must be positive")
        if self.shuffles < 1:
            raise AnnConfigError("shuffles must be positive")


@dataclass
class MinMaxScaler:
    """Column-wise affine map of the training range onto [0.05, 0.95]."""

    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, X, name="input"):
        X = np.asarray(X, dtype=float)
        X2 = X.reshape(len(X), -1)
        low, high = X2.min(axis=0), X2.max(axis=0)
        const = np.flatnonzero(high - low <= 0)
        if const.size:
            warnings.warn(f"constant {name} column(s) {const.tolist()} map to the scale midpoint",
                          stacklevel=3)
        return cls(low, high)

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        span = self.high - self.low
        safe = np.where(span > 0, span, 1.0)
        Z = SCALE_LO + (SCALE_HI - SCALE_LO) * (X - self.low) / safe
        return np.where(span > 0, Z, 0.5 * (SCALE_LO + SCALE_HI))

    def inverse(self, Z):
        Z = np.asarray(Z, dtype=float)
        span = self.high - self.low
        return self.low + (Z - SCALE_LO) / (SCALE_HI - SCALE_LO) * span

    def to_dict(self):
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["low"], dtype=float), np.asarray(d["high"], dtype=float))


def sigmoid(z):
    # clip keeps exp finite; sigmoid is flat to double precision beyond it
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def layer_sizes(n_inputs, hidden_sizes):
    return (int(n_inputs), *(int(h) for h in hidden_sizes), 1)


def n_weights(sizes):
    return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))


def unpack(w, sizes):
    """Split a flat vector into [(W, b), ...]; W has shape (fan_in, fan_out)."""
    out, k = [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = w[k:k + a * b].reshape(a, b)
        k += a * b
        out.append((W, w[k:k + b]))
        k += b
    return out


def forward(w, sizes, X):
    """Activations of every layer, input first."""
    acts = [X]
    for W, b in unpack(w, sizes):
        acts.append(sigmoid(acts[-1] @ W + b))
    return acts


def mse_and_gradient(w, sizes, X, y):
    """Mean squared error of the network output and its gradient by backpropagation."""
    acts = forward(w, sizes, X)
    out = acts[-1][:, 0]
    resid = out - y
    n = len(y)
    loss = float(resid @ resid / n)
    grads = []
    delta = (2.0 / n) * resid[:, None] * out[:, None] * (1.0 - out[:, None])
    layers = unpack(w, sizes)
    for i in range(len(layers) - 1, -1, -1):
        a = acts[i]
        grads.append((a.T @ delta, delta.sum(axis=0)))
        if i:
            W = layers[i][0]
            delta = (delta @ W.T) * a * (1.0 - a)
    g = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
    return loss, g


def mse(w, sizes, X, y):
    out = forward(w, sizes, X)[-1][:, 0]
    r = out - y
    return float(r @ r / len(y))


def init_weights(sizes, rng):
    return rng.uniform(-0.5, 0.5, n_weights(sizes))


@dataclass
class AnnModel:
    """Trained network plus the scaling captured from its training data."""

    sizes: tuple
    weights: np.ndarray
    x_scaler: MinMaxScaler
    y_scaler: MinMaxScaler
    feature_names: list = field(default_factory=list)
    iterations: int = 0
    loss: float = float("nan")
    message: str = ""

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if self.sizes[-1] != 1 or len(self.sizes) != 4:
            raise AnnConfigError(f"expected (inputs, h1, h2, 1) layer sizes, got {self.sizes}")
        if self.weights.size != n_weights(self.sizes):
            raise AnnConfigError("weight vector does not match layer sizes")

    @property
    def layers(self):
        return unpack(self.weights, self.sizes)

    def predict_scaled(self, X_scaled):
        return forward(self.weights, self.sizes, np.asarray(X_scaled, dtype=float))[-1][:, 0]

    def predict(self, X):
        """Predictions on the original target scale."""
        z = self.predict_scaled(self.x_scaler.transform(X))
        return self.y_scaler.inverse(z)

    def rmse(self, X, y):
        """RMSE on the scaled target, using the training-time scaling."""
        z = self.predict_scaled(self.x_scaler.transform(X))
        r = z - self.y_scaler.transform(np.asarray(y, dtype=float))
        return float(np.sqrt(np.mean(r * r)))

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "sizes": list(self.sizes),
            "layers": [{"weights": W.tolist(), "bias": b.tolist()} for W, b in self.layers],
            "x_scaler": self.x_scaler.to_dict(),
            "y_scaler": self.y_scaler.to_dict(),
            "feature_names": list(self.feature_names),
            "iterations": self.iterations,
            "loss": self.loss,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('format_version')}")
        parts = []
        for layer in d["layers"]:
            parts.append(np.asarray(layer["weights"], dtype=float).ravel())
            parts.append(np.asarray(layer["bias"], dtype=float))
        return cls(tuple(d["sizes"]), np.concatenate(parts), MinMaxScaler.from_dict(d["x_scaler"]),
                   MinMaxScaler.from_dict(d["y_scaler"]), list(d.get("feature_names", [])),
                   int(d.get("iterations", 0)), float(d.get("loss", float("nan"))), d.get("message", ""))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
