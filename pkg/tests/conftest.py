import numpy as np
import pytest

from acceptance_log import LINES
from semann.sem.syntax import default_model, parse_model
from semann.synth import SynthTruth, generate, survey_truth, standardized_truth

THREE_CONSTRUCT = """
X =~ x1 + x2 + x3 + x4
M =~ m1 + m2 + m3 + m4
Y =~ y1 + y2 + y3 + y4
M ~ X
Y ~ M + X
"""

THREE_LOADINGS = {"x1": 0.80, "x2": 0.70, "x3": 0.65, "x4": 0.75,
                  "m1": 0.85, "m2": 0.60, "m3": 0.70, "m4": 0.80,
                  "y1": 0.75, "y2": 0.80, "y3": 0.60, "y4": 0.70}


def three_construct_truth(n, seed, a=0.5, b=0.3, c=0.0, mode="continuous"):
    spec = parse_model(THREE_CONSTRUCT)
    params = standardized_truth(spec, THREE_LOADINGS, {("M", "X"): a, ("Y", "M"): b, ("Y", "X"): c})
    return SynthTruth(spec=spec, params=params, n=n, seed=seed, likert_mode=mode)


@pytest.fixture(scope="session")
def small_spec():
    return parse_model(THREE_CONSTRUCT)


@pytest.fixture(scope="session")
def small_data():
    return generate(three_construct_truth(800, seed=11))


@pytest.fixture(scope="session")
def bundled_spec():
    return default_model()


@pytest.fixture(scope="session")
def survey_data():
    return generate(survey_truth(n=603, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
