import math
import warnings

import numpy as np
import pytest

from conftest import three_construct_truth
from semann.sem.estimation import (FitOptions, HeywoodWarning, SemDataError, fit_cfa, fit_ml, fit_model,
                                   sample_covariance, start_values)
from semann.sem.hypotheses import test_hypotheses as run_hypotheses
from semann.sem.hypotheses import verdict
from semann.sem.indices import cfi, fit_indices, gfi, independence_chi_square, passes, rmsea, tli
from semann.sem.model import MLObjective, SemModel, implied_covariance
from semann.sem.optimize import ConvergenceError, bfgs
from semann.synth import generate


def relative_gradient_error(objective, theta, h=1e-6):
    _, g = objective.value_and_gradient(theta)
    num = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        num[k] = (objective.value(theta + e) - objective.value(theta - e)) / (2 * h)
    return np.max(np.abs(num - g)) / max(np.max(np.abs(g)), 1e-12)


def test_gradient_matches_finite_differences(small_spec, small_data, rng):
    model = SemModel(small_spec)
    X = small_data.matrix(model.observed_names)
    obj = MLObjective(model, sample_covariance(X))
    theta0 = start_values(model, X)
    for _ in range(5):
        theta = theta0 * rng.uniform(0.8, 1.2, theta0.size)
        assert relative_gradient_error(obj, theta) < 1e-5


def test_partitioned_and_block_forms_agree(small_spec, small_data, rng):
    model = SemModel(small_spec)
    theta = start_values(model, small_data.matrix(model.observed_names))
    theta = theta + 0.1 * rng.uniform(size=theta.size) * (theta != 0)
    params = model.to_parameters(theta)
    assert np.allclose(model.implied(theta), implied_covariance(params), atol=1e-12)
    assert np.allclose(model.from_parameters(params), theta)


def test_degrees_of_freedom(small_spec, bundled_spec):
    # 12 items: 78 moments; 9 loadings + 12 errors + 1 exogenous variance + 2 disturbances + 3 paths
    assert SemModel(small_spec).df == 78 - 27
    assert SemModel(bundled_spec).df == 1095


def test_bfgs_rosenbrock():
    def fg(x):
        a, b = x
        f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
        return f, np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    res = bfgs(fg, np.array([-1.2, 1.0]))
    assert res.converged
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-5)
    with pytest.raises(ConvergenceError) as err:
        bfgs(fg, np.array([-1.2, 1.0]), max_iter=3)
    assert err.value.result.iterations == 3


def test_fit_indices_formulas():
    assert rmsea(0.0, 10, 100) == 0.0
    assert cfi(0.0, 10, 500.0, 45) == 1.0
    assert rmsea(100.0, 50, 603) == pytest.approx(math.sqrt(50 / (50 * 602)))
    assert tli(50.0, 50, 500.0, 66) == pytest.approx(1.0)
    assert tli(0.0, 0, 500.0, 66) is None
    fi = fit_indices(100.0, 50, 603, 1000.0, 66)
    assert fi.chi2_df == pytest.approx(2.0)
    assert fi.p_value == pytest.approx(3.454931382984871e-05, rel=1e-8)  # scipy chi2.sf(100, 50)


def test_gfi_perfect_fit():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert gfi(S, S) == pytest.approx(1.0)


def test_independence_baseline():
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    chi2, df = independence_chi_square(S, 101)
    assert df == 1
    assert chi2 == pytest.approx(-100 * math.log(0.75))


@pytest.mark.parametrize("index,value,expected", [
    ("rmsea", 0.08, True), ("rmsea", 0.081, False), ("gfi", 0.88, False), ("gfi", 0.90, True),
    ("cfi", 0.94, True), ("chi2_df", 5.0, True), ("chi2_df", 5.2, False)])
def test_threshold_flags(index, value, expected):
    assert passes(index, value) is expected


def test_small_model_recovery(small_spec):
    data = generate(three_construct_truth(3000, seed=21))
    fit = fit_ml(small_spec, data)
    assert fit.path("M", "X").std == pytest.approx(0.5, abs=0.05)
    assert fit.path("Y", "M").std == pytest.approx(0.3, abs=0.05)
    assert abs(fit.path("Y", "X").std) < 0.06
    assert fit.fit.rmsea < 0.05 and fit.fit.cfi > 0.95
    e = fit.path("M", "X")
    assert e.se > 0 and e.p < 0.001


def test_fit_is_scale_invariant(small_spec, small_data):
    model = SemModel(small_spec)
    X = small_data.matrix(model.observed_names)
    a = fit_model(model, X, FitOptions(standard_errors=False))
    b = fit_model(model, X * 3.0, FitOptions(standard_errors=False))
    assert a.fml == pytest.approx(b.fml, abs=1e-6)
    assert a.path("Y", "M").std == pytest.approx(b.path("Y", "M").std, abs=1e-5)


def test_cfa_correlates_all_constructs(small_spec, small_data):
    cfa = fit_cfa(small_spec, small_data, standard_errors=False)
    assert cfa.latent_corr.shape == (3, 3)
    assert SemModel(small_spec, cfa=True).df == 78 - 27  # 3 covariances replace 3 paths
    assert cfa.latent_corr.loc["X", "M"] == pytest.approx(0.5, abs=0.1)


def test_singular_data_rejected(small_spec, small_data):
    model = SemModel(small_spec)
    X = small_data.matrix(model.observed_names)
    X[:, 1] = X[:, 0]
    with pytest.raises(SemDataError):
        fit_model(model, X)


def test_heywood_case_is_floored():
    spec_text = "A =~ a1 + a2 + a3\n"
    from semann.sem.syntax import parse_model
    spec = parse_model(spec_text)
    rng = np.random.default_rng(0)
    f = rng.normal(size=60)
    X = np.column_stack([f + 1e-3 * rng.normal(size=60), f + rng.normal(size=60), f + rng.normal(size=60)])
    model = SemModel(spec)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        fit = fit_model(model, X, FitOptions(standard_errors=False))
    if fit.heywood:
        assert any(issubclass(w.category, HeywoodWarning) for w in rec)
    theta_var = [fit.theta[k] for k, fp in enumerate(model.free) if fp.is_variance]
    assert min(theta_var) > 0


def test_verdict_rules():
    assert verdict(0.3, 0.1, +1)[2] is True
    assert verdict(0.3, 0.1, -1)[2] is False
    assert verdict(0.05, 0.1, +1)[2] is False
    z, p, ok = verdict(1.0, 0.0, +1)
    assert math.isnan(z) and not ok


def test_hypothesis_table(small_spec):
    from semann.sem.syntax import Hypothesis
    fit = fit_ml(small_spec, generate(three_construct_truth(1000, seed=8)))
    rows = run_hypotheses(fit, [Hypothesis("H1", "M", "X", 1), ("H2", "Y", "X", 1)])
    assert rows[0].supported and not rows[1].supported
    assert rows[0].stars == "***"
