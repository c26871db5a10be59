import json
import math

import numpy as np
import pytest

from semann import report
from semann.cli import main
from semann.pipeline import EXIT_CODES, PipelineConfig, StageError, run_pipeline, select_ann_inputs
from semann.synth import generate, survey_truth


@pytest.fixture(scope="module")
def survey_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "survey.csv"
    generate(survey_truth(n=603, seed=5)).to_csv(p)
    return p


@pytest.fixture(scope="module")
def pipeline_run(survey_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return out, run_pipeline(PipelineConfig(survey_csv, out=out, B=200, seed=1, max_iterations=300))


def test_pipeline_bundle(pipeline_run):
    out, res = pipeline_run
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert {e["file"] for e in manifest["files"]} >= {"anova.json", "cfa.json", "sem.json", "mediation.json",
                                                      "ann.json", "comparison.json"}
    sem = json.loads((out / "sem.json").read_text())
    assert all(sem["fit"]["pass"].values())
    assert all(json.loads((out / "cfa.json").read_text())["fit"]["pass"].values())
    assert len(sem["hypotheses"]) == 12
    assert set(res["ann"]) == {"TSAT", "RP", "gap"}


def test_ann_inputs_follow_significance(pipeline_run):
    out, _ = pipeline_run
    ann = json.loads((out / "ann.json").read_text())
    sem = json.loads((out / "sem.json").read_text())
    p = {(e["lhs"], e["rhs"]): e["p"] for e in sem["estimates"] if e["op"] == "~"}
    for target, inputs in ann["inputs"].items():
        for (lhs, rhs), pv in p.items():
            if lhs == target:
                assert (rhs in inputs) == (pv < 0.05)


def test_manifest_hashes_match_files(pipeline_run):
    import hashlib
    out, _ = pipeline_run
    for e in json.loads((out / "manifest.json").read_text())["files"]:
        assert hashlib.sha256((out / e["file"]).read_bytes()).hexdigest() == e["sha256"]


def test_empty_file_fails_at_ingest(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(StageError) as err:
        run_pipeline(PipelineConfig(empty, out=tmp_path / "o"))
    assert err.value.exit_code == EXIT_CODES["ingest"]
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["failed_stage"] == "ingest" and manifest["files"] == []


def test_config_threshold_validated(tmp_path):
    with pytest.raises(ValueError):
        PipelineConfig(tmp_path / "x.csv", threshold=1.5)


def test_output_env_default(monkeypatch, tmp_path):
    monkeypatch.setenv("SEMANN_OUTPUT_DIR", str(tmp_path / "envout"))
    assert PipelineConfig("d.csv").out == tmp_path / "envout"


def test_cli_describe_json(survey_csv, tmp_path):
    out = tmp_path / "d.json"
    assert main(["describe", "--data", str(survey_csv), "--format", "json", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["outcome"]["total"] == 603


def test_cli_compare_text(tmp_path, capsys):
    table = tmp_path / "t.csv"
    table.write_text("input,sem_estimate,nri\nA,0.5,100%\nB,0.2,30%\n")
    assert main(["compare", "--table", str(table)]) == 0
    assert "Yes" in capsys.readouterr().out


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["describe", "--no-such-flag"])
    assert err.value.code == 2


def test_cli_ingest_error_exit_code(tmp_path):
    assert main(["describe", "--data", str(tmp_path / "missing.csv")]) == EXIT_CODES["ingest"]


def test_cli_simulate_then_cfa(tmp_path):
    truth = tmp_path / "truth.json"
    truth.write_text(json.dumps({
        "model": "A =~ a1 + a2 + a3 + a4\nB =~ b1 + b2 + b3\n",
        "loadings": {"a1": 0.8, "a2": 0.7, "a3": 0.75, "a4": 0.65, "b1": 0.8, "b2": 0.7, "b3": 0.6},
        "correlations": {"A ~~ B": 0.3},
    }))
    model = tmp_path / "m.sem"
    model.write_text("A =~ a1 + a2 + a3 + a4\nB =~ b1 + b2 + b3\n")
    data = tmp_path / "sim.csv"
    assert main(["simulate", "--truth", str(truth), "--n", "5000", "--seed", "7", "--continuous",
                 "--out", str(data)]) == 0
    out = tmp_path / "cfa.json"
    assert main(["cfa", "--data", str(data), "--model", str(model), "--continuous", "--format", "json",
                 "--out", str(out)]) == 0
    loadings = {e["rhs"]: e["std"] for e in json.loads(out.read_text())["loadings"]}
    expected = {"a1": 0.8, "a2": 0.7, "a3": 0.75, "a4": 0.65, "b1": 0.8, "b2": 0.7, "b3": 0.6}
    for item, lam in expected.items():
        assert loadings[item] == pytest.approx(lam, abs=0.05)


def test_report_json_is_strict():
    text = report.dumps({"a": np.float64(math.nan), "b": np.arange(2), "c": np.bool_(True)})
    assert json.loads(text) == {"a": None, "b": [0, 1], "c": True}


def test_report_table_alignment():
    t = report.table(["name", "value"], [["x", 1.0], ["longer", 22.5]])
    lines = t.splitlines()
    assert lines[2].endswith(" 1.000") and lines[3].endswith("22.500")
