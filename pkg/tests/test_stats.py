import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from semann.stats import (DegreesOfFreedomError, describe_outcome, eta_from_f, frequency_summary,
                          one_way_anova, significance_stars)


def test_frequency_summary_table_a4():
    s = frequency_summary([2, 3, 4, 5, 6, 7, 8, 9], [5, 56, 86, 211, 140, 44, 50, 11])
    assert s.mean == pytest.approx(5.3466, abs=1e-4)
    assert s.sd == pytest.approx(1.4251, abs=1e-4)
    assert s.table.total == 603
    assert dict(s.table.proportions())["5 s"] == 34.99


def test_describe_outcome_from_values():
    s = describe_outcome(np.array([2.0, 2.0, 3.0, 5.0]))
    assert [c for _, c in s.table.bins] == [2, 1, 1]
    assert s.sd == pytest.approx(np.std([2, 2, 3, 5]))


def test_anova_small_oracle():
    r = one_way_anova([[1, 2, 3], [4, 5, 6]])
    assert r.F == pytest.approx(13.5)
    assert r.eta_p_sq == pytest.approx(0.771428, abs=1e-5)
    assert (r.df1, r.df2) == (1, 4)


def test_anova_matches_scipy(rng):
    groups = [rng.normal(m, 1.0, n) for m, n in [(0.0, 30), (0.4, 25), (0.1, 40)]]
    r = one_way_anova(groups)
    ref = sps.f_oneway(*groups)
    assert r.F == pytest.approx(ref.statistic, rel=1e-10)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-8)
    assert r.eta_p_sq == pytest.approx(eta_from_f(r.F, r.df1, r.df2), rel=1e-12)


def test_anova_degenerate_cases():
    r = one_way_anova([[1, 1], [2, 2]])
    assert math.isinf(r.F) and r.eta_p_sq == 1.0 and r.p == 0.0
    r = one_way_anova([[3, 3], [3, 3]])
    assert r.F == 0.0 and r.p == 1.0
    with pytest.raises(DegreesOfFreedomError):
        one_way_anova([[1, 2, 3]])
    with pytest.raises(DegreesOfFreedomError):
        one_way_anova([[1], [2]])


@given(st.floats(-100, 100), st.floats(0.1, 50).filter(lambda c: abs(c) > 0.1), st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_anova_invariances(shift, scale, seed):
    g = np.random.default_rng(seed)
    groups = [g.normal(size=8), g.normal(0.5, 1, size=9), g.normal(size=7)]
    base = one_way_anova(groups).F
    assert one_way_anova([x + shift for x in groups]).F == pytest.approx(base, rel=1e-6)
    assert one_way_anova([x * scale for x in groups]).F == pytest.approx(base, rel=1e-6)
    assert one_way_anova(groups[::-1]).F == pytest.approx(base, rel=1e-9)


@pytest.mark.parametrize("p,stars", [(0.0004, "***"), (0.004, "**"), (0.04, "*"), (0.06, ""), (0.001, "**")])
def test_stars(p, stars):
    assert significance_stars(p) == stars
