"""Descriptive statistics and one-way ANOVA."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import f_sf


@dataclass(frozen=True)
class FrequencyTable:
    bins: tuple  # ((label, count), ...)
    total: int

    def __post_init__(self):
        if any(c < 0 for _, c in self.bins):
            raise ValueError("counts must be nonnegative")
        if sum(c for _, c in self.bins) != self.total:
            raise ValueError("counts must sum to total")

    def proportions(self):
        """Percentages rounded to two decimals."""
        return [(label, round(100.0 * c / self.total, 2)) for label, c in self.bins]


@dataclass(frozen=True)
class OutcomeSummary:
    table: FrequencyTable
    mean: float
    sd: float

    def to_dict(self):
        return {
            "bins": [{"label": lab, "frequency": c, "proportion": p}
                     for (lab, c), (_, p) in zip(self.table.bins, self.table.proportions())],
            "total": self.table.total,
            "mean": self.mean,
            "sd": self.sd,
        }


def _label(v):
    return f"{int(v)} s" if float(v).is_integer() else f"{v:g} s"


def frequency_summary(values, counts, labels=None) -> OutcomeSummary:
    """Mean and population SD from a frequency distribution."""
    t = np.asarray(values, dtype=float)
    f = np.asarray(counts, dtype=float)
    if f.sum() <= 0:
        raise ValueError("empty frequency table")
    n = f.sum()
    mean = float((f * t).sum() / n)
    sd = float(math.sqrt((f * (t - mean) ** 2).sum() / n))
    labels = labels or [_label(v) for v in t]
    table = FrequencyTable(tuple((lab, int(c)) for lab, c in zip(labels, counts)), int(n))
    return OutcomeSummary(table, mean, sd)


def describe_outcome(data, labels=None) -> OutcomeSummary:
    """Frequency table, mean and population SD of the accepted-gap outcome.

    Bins are the distinct observed values unless ``labels`` maps values to
    bin labels.
    """
    y = data.outcome if hasattr(data, "outcome") else data
    if y is None:
        raise ValueError("dataset has no outcome column")
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty dataset")
    values, counts = np.unique(y, return_counts=True)
    names = [labels[v] for v in values] if labels else None
    return frequency_summary(values, counts, names)


@dataclass(frozen=True)
class AnovaResult:
    F: float
    df1: int
    df2: int
    p: float
    eta_p_sq: float
    ss_between: float = float("nan")
    ss_within: float = float("nan")

    @property
    def stars(self):
        return significance_stars(self.p)

    def to_dict(self):
        return {"F": self.F, "df1": self.df1, "df2": self.df2, "p": self.p,
                "eta_p_sq": self.eta_p_sq, "stars": self.stars}


class DegreesOfFreedomError(ValueError):
    pass


def eta_from_f(F, df1, df2):
    """Partial eta squared of a one-way design from its F statistic."""
    if math.isinf(F):
        return 1.0
    return (F * df1) / (F * df1 + df2)


def one_way_anova(groups) -> AnovaResult:
    """One-way ANOVA over a sequence of per-group samples."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    groups = [g for g in groups if g.size]
    k = len(groups)
    n = sum(g.size for g in groups)
    if k < 2:
        raise DegreesOfFreedomError("factor needs at least two non-empty levels")
    if n - k < 1:
        raise DegreesOfFreedomError("no within-group degrees of freedom")
    grand = np.concatenate(groups).mean()
    ss_between = float(sum(g.size * (g.mean() - grand) ** 2 for g in groups))
    ss_within = float(sum(((g - g.mean()) ** 2).sum() for g in groups))
    df1, df2 = k - 1, n - k
    scale = max(ss_between + ss_within, 1e-300)
    if ss_between <= 1e-14 * scale:
        ss_between = 0.0
    if ss_within <= 1e-14 * scale:
        if ss_between == 0.0:
            return AnovaResult(0.0, df1, df2, 1.0, 0.0, ss_between, 0.0)
        return AnovaResult(math.inf, df1, df2, 0.0, 1.0, ss_between, 0.0)
    F = (ss_between / df1) / (ss_within / df2)
    eta = ss_between / (ss_between + ss_within)
    return AnovaResult(F, df1, df2, f_sf(F, df1, df2), eta, ss_between, ss_within)


def anova_by_factor(data, factor, dependent) -> AnovaResult:
    """ANOVA of a per-respondent score across the levels of a demographic field."""
    codes = data.demographics[factor].to_numpy(dtype=int)
    dependent = np.asarray(dependent, dtype=float)
    levels = np.unique(codes)
    return one_way_anova([dependent[codes == lv] for lv in levels])


def significance_stars(p) -> str:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""
