"""Goodness-of-fit indices with the conventional acceptance thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..specfun import chi2_sf

# Printed values are rounded to two decimals, so the thresholds are applied
# inclusively: a reported 0.90 meets "> 0.90".
CRITERIA = {
    "rmsea": ("<", 0.08),
    "gfi": (">", 0.90),
    "cfi": (">", 0.90),
    "tli": (">", 0.90),
    "chi2_df": ("<", 5.00),
}


def passes(index, value):
    """Whether a fit-index value meets its acceptance criterion."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    op, threshold = CRITERIA[index]
    return value <= threshold if op == "<" else value >= threshold


@dataclass
class FitIndices:
    chi_square: float
    df: int
    p_value: float
    n: int
    baseline_chi_square: float
    baseline_df: int
    rmsea: float
    gfi: float
    cfi: float
    tli: float | None
    chi2_df: float | None

    @property
    def pass_flags(self):
        return {k: passes(k, getattr(self, k)) for k in CRITERIA}

    @property
    def all_pass(self):
        return all(v is not False for v in self.pass_flags.values())

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("chi_square", "df", "p_value", "n", "baseline_chi_square",
                                          "baseline_df", "rmsea", "gfi", "cfi", "tli", "chi2_df")}
        d["pass"] = self.pass_flags
        return d


def rmsea(chi_square, df, n):
    if df == 0:
        return 0.0
    return math.sqrt(max(chi_square - df, 0.0) / (df * (n - 1)))


def cfi(chi_square, df, base_chi_square, base_df):
    denom = max(base_chi_square - base_df, chi_square - df, 0.0)
    if denom == 0.0:
        return 1.0
    return 1.0 - max(chi_square - df, 0.0) / denom


def tli(chi_square, df, base_chi_square, base_df):
    if df == 0 or base_df == 0:
        return None
    base_ratio = base_chi_square / base_df
    if base_ratio == 1.0:
        return None
    return (base_ratio - chi_square / df) / (base_ratio - 1.0)


def gfi(S, sigma):
    """ML goodness-of-fit index 1 - tr[(Sigma^-1 S - I)^2] / tr[(Sigma^-1 S)^2]."""
    S = np.asarray(S, dtype=float)
    m = np.linalg.solve(np.asarray(sigma, dtype=float), S)
    r = m - np.eye(S.shape[0])
    return float(1.0 - np.trace(r @ r) / np.trace(m @ m))


def independence_chi_square(S, n):
    """Chi-square and df of the model with only variances free (Sigma = diag(S))."""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    _, logdet = np.linalg.slogdet(S)
    f = float(np.sum(np.log(np.diag(S))) - logdet)
    return (n - 1) * f, p * (p - 1) // 2


def fit_indices(chi_square, df, n, base_chi_square, base_df, S=None, sigma=None) -> FitIndices:
    p = chi2_sf(chi_square, df) if df > 0 else float("nan")
    return FitIndices(
        chi_square=float(chi_square), df=int(df), p_value=p, n=int(n),
        baseline_chi_square=float(base_chi_square), baseline_df=int(base_df),
        rmsea=rmsea(chi_square, df, n),
        gfi=gfi(S, sigma) if S is not None else float("nan"),
        cfi=cfi(chi_square, df, base_chi_square, base_df),
        tli=tli(chi_square, df, base_chi_square, base_df),
        chi2_df=chi_square / df if df > 0 else None,
    )
