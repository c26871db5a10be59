import numpy as np
import pytest

from conftest import three_construct_truth
from semann.sem.estimation import sample_covariance
from semann.sem.model import SemModel, implied_covariance
from semann.synth import SynthError, generate, load_truth, survey_truth, truth_from_dict


def test_same_seed_same_data():
    a = generate(survey_truth(n=50, seed=3))
    b = generate(survey_truth(n=50, seed=3))
    c = generate(survey_truth(n=50, seed=4))
    assert a.items.equals(b.items) and np.array_equal(a.outcome, b.outcome)
    assert not a.items.equals(c.items)


def test_discretized_items_are_likert(survey_data):
    x = survey_data.items.to_numpy()
    assert x.min() >= 1 and x.max() <= 5
    assert survey_data.likert
    assert set(np.unique(survey_data.outcome)) <= set(range(1, 20))


def test_demographic_marginals(survey_data):
    # license is 93/7 in the sample; 603 draws land well within 5 points
    share = survey_data.demographics["license"].mean()
    assert 0.85 < share < 0.99


def test_continuous_covariance_matches_truth():
    truth = three_construct_truth(20000, seed=2)
    data = generate(truth)
    model = SemModel(truth.spec)
    S = sample_covariance(data.matrix(model.observed_names))
    sigma = implied_covariance(truth.params)
    assert np.max(np.abs(S - sigma)) < 0.05
    assert np.allclose(np.diag(sigma), 1.0)


def test_truth_json_round_trip(tmp_path):
    truth = three_construct_truth(100, seed=1)
    p = tmp_path / "truth.json"
    truth.save(p)
    back = load_truth(p)
    assert np.allclose(back.params.B, truth.params.B)
    assert generate(back).items.equals(generate(truth).items)


def test_shorthand_truth():
    t = truth_from_dict({"model": "A =~ a1 + a2 + a3\nB =~ b1 + b2 + b3\nB ~ A\n",
                         "loadings": {"a1": 0.8}, "paths": {"B ~ A": 0.4}, "n": 10})
    assert t.params.B[0, 0] == pytest.approx(0.4)
    assert t.params.psi[0, 0] == pytest.approx(1 - 0.16)


def test_invalid_truths():
    with pytest.raises(SynthError):
        three_construct_truth(10, seed=0, a=0.9, b=0.9, c=0.9)
    with pytest.raises(SynthError):
        survey_truth(n=0)
