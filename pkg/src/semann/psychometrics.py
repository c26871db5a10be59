"""Scale reliability and validity: Cronbach's alpha, AVE, CR, Fornell-Larcker."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class UndefinedAlphaError(ValueError):
    pass


def cronbach_alpha(items) -> float:
    """Cronbach's alpha of a respondents x items matrix (sample variances)."""
    x = np.asarray(items, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("need at least two items")
    if x.shape[0] < 2:
        raise ValueError("need at least two respondents")
    k = x.shape[1]
    total_var = x.sum(axis=1).var(ddof=1)
    if total_var <= 0:
        raise UndefinedAlphaError("total score has zero variance")
    return float(k / (k - 1) * (1.0 - x.var(axis=0, ddof=1).sum() / total_var))


def ave_cr(loadings):
    """Average variance extracted and composite reliability of standardized loadings."""
    lam = np.asarray(loadings, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("no loadings given")
    if not np.all(np.isfinite(lam)):
        raise ValueError("loadings must be finite")
    if np.any(np.abs(lam) > 1):
        warnings.warn("standardized loading with |lambda| > 1", stacklevel=2)
    ave = float(np.mean(lam ** 2))
    s = lam.sum() ** 2
    cr = float(s / (s + np.sum(1.0 - lam ** 2)))
    return ave, cr


@dataclass
class ConstructReliability:
    construct: str
    loadings: dict
    alpha: float
    ave: float
    cr: float

    def to_dict(self):
        return {"construct": self.construct, "loadings": self.loadings,
                "alpha": self.alpha, "ave": self.ave, "cr": self.cr}


def reliability_report(data, spec, std_loadings):
    """Alpha from raw items and AVE/CR from standardized CFA loadings, per construct.

    ``std_loadings`` maps ``(construct, item)`` to a standardized loading.
    """
    out = []
    for c, items in spec.measurement.items():
        lam = {it: float(std_loadings[(c, it)]) for it in items}
        alpha = cronbach_alpha(data.items[items].to_numpy(dtype=float)) if len(items) > 1 else float("nan")
        ave, cr = ave_cr(list(lam.values()))
        out.append(ConstructReliability(c, lam, alpha, ave, cr))
    return out


@dataclass
class DiscriminantMatrix:
    names: list
    matrix: np.ndarray
    passed: dict

    def to_dict(self):
        return {"names": list(self.names),
                "matrix": [[float(v) for v in row] for row in self.matrix],
                "passed": dict(self.passed)}


def discriminant_validity(aves, correlations, names=None) -> DiscriminantMatrix:
    """Fornell-Larcker table: sqrt(AVE) on the diagonal, correlations off it."""
    if isinstance(aves, dict):
        names = list(aves) if names is None else names
        aves = [aves[n] for n in names]
    aves = np.asarray(aves, dtype=float)
    r = np.asarray(correlations, dtype=float)
    k = aves.size
    if r.shape != (k, k):
        raise ValueError(f"correlation matrix shape {r.shape} does not match {k} constructs")
    if not np.allclose(r, r.T, atol=1e-8):
        raise ValueError("correlation matrix must be symmetric")
    names = list(names) if names is not None else [str(i) for i in range(k)]
    out = r.copy()
    diag = np.sqrt(aves)
    np.fill_diagonal(out, diag)
    passed = {}
    for i, n in enumerate(names):
        others = np.abs(np.delete(r[i], i))
        passed[n] = bool(others.size == 0 or diag[i] > others.max())
    return DiscriminantMatrix(names, out, passed)
