"""Hypothesis verdicts for fitted structural paths."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..specfun import norm_two_sided_p
from ..stats import significance_stars
from .syntax import Hypothesis


@dataclass
class HypothesisResult:
    label: str
    target: str
    predictor: str
    expected_sign: int
    estimate: float  # standardized
    z: float
    p: float
    supported: bool

    @property
    def stars(self):
        return "" if math.isnan(self.p) else significance_stars(self.p)

    def to_dict(self):
        return {"label": self.label, "path": f"{self.predictor} -> {self.target}",
                "expected_sign": self.expected_sign, "estimate": self.estimate,
                "z": self.z, "p": self.p, "stars": self.stars, "supported": self.supported}


def verdict(estimate, se, expected_sign=1, alpha=0.05):
    """(z, p, supported) for a Wald test of one path."""
    z = estimate / se if se > 0 else math.nan
    p = norm_two_sided_p(z) if not math.isnan(z) else math.nan
    sign_ok = expected_sign == 0 or (estimate > 0 if expected_sign > 0 else estimate < 0)
    return z, p, bool(not math.isnan(p) and p < alpha and sign_ok)


def test_hypotheses(fit, hypotheses=None, alpha=0.05):
    """One row per hypothesis: standardized estimate, stars and verdict.

    A hypothesis is supported when its path is significant at ``alpha`` and
    carries the expected sign.
    """
    hypotheses = fit.spec.hypotheses if hypotheses is None else hypotheses
    rows = []
    for h in hypotheses:
        if not isinstance(h, Hypothesis):
            label, target, predictor, sign = h
            h = Hypothesis(label, target, predictor, sign)
        est = fit.path(h.target, h.predictor)
        z, p, ok = verdict(est.estimate, est.se, h.sign, alpha)
        rows.append(HypothesisResult(h.label, h.target, h.predictor, h.sign, est.std, z, p, ok))
    return rows


test_hypotheses.__test__ = False
