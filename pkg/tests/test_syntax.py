import pytest

from semann.sem.syntax import (Chain, Hypothesis, ModelSyntaxError, ModelValidationError, default_model,
                               default_model_text, parse_model)

BASIC = """
# two constructs
A =~ a1 + a2 + a3
B =~ b1 + b2 + b3
B ~ A
"""


def test_basic_parse():
    spec = parse_model(BASIC)
    assert spec.measurement == {"A": ["a1", "a2", "a3"], "B": ["b1", "b2", "b3"]}
    assert spec.paths() == [("B", "A")]
    assert spec.endogenous == ["B"]
    assert spec.exogenous == ["A"]
    assert spec.construct_of("b2") == "B"


def test_directives():
    spec = parse_model(BASIC + """
outcome gap
demographic sex: f | m
gap ~ B + sex
hypothesis H1: B ~ A (+)
hypothesis H2: gap ~ B (-)
mediation A -> B -> gap
ann B, gap
""")
    assert spec.outcome == "gap"
    assert spec.demographics == {"sex": ["f", "m"]}
    assert spec.hypotheses[1] == Hypothesis("H2", "gap", "B", -1)
    assert spec.mediations == [Chain("A", "B", "gap")]
    assert str(spec.mediations[0]) == "A -> B -> gap"
    assert spec.ann_targets == ["B", "gap"]
    assert spec.predictors_of("gap") == ["B", "sex"]


def test_round_trip():
    spec = default_model()
    again = parse_model(spec.to_text())
    assert again.measurement == spec.measurement
    assert again.paths() == spec.paths()
    assert again.hypotheses == spec.hypotheses
    assert again.mediations == spec.mediations


def test_unknown_variable_reports_line():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("A =~ a1 + a2\nA ~ Z\n")
    assert err.value.line == 2
    assert "Z" in str(err.value)


def test_duplicate_item():
    with pytest.raises((ModelSyntaxError, ModelValidationError)):
        parse_model("A =~ a1 + a2\nB =~ a2 + b1\n")


def test_cycle_rejected():
    with pytest.raises(ModelValidationError):
        parse_model("A =~ a1 + a2\nB =~ b1 + b2\nB ~ A\nA ~ B\n")


def test_garbage_line():
    with pytest.raises(ModelSyntaxError):
        parse_model("A =~ a1 + a2\nthis is not a statement\n")


def test_bundled_model_shape():
    spec = default_model()
    assert len(spec.constructs) == 11
    assert len(spec.items) == 43
    assert spec.outcome == "gap"
    assert len(spec.hypotheses) == 12
    assert len(spec.mediations) == 8
    assert spec.ann_targets == ["TSAT", "RP", "gap"]
    assert "hypothesis H1" in default_model_text()
