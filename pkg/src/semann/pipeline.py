"""Two-stage SEM then ANN analysis, run stage by stage with a hashed manifest."""
from __future__ import annotations

import hashlib
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .ann import AnnConfig, ImportanceReport, compare_sem_ann, cross_validate, permutation_importance
from .ingest import ScreeningRules, load_csv, screen, write_exclusions
from .mediation import bootstrap_mediation
from .psychometrics import discriminant_validity, reliability_report
from .sem.estimation import FitOptions, fit_ml
from .sem.hypotheses import test_hypotheses
from .sem.syntax import default_model, load_model
from .stats import DegreesOfFreedomError, anova_by_factor, describe_outcome

logger = logging.getLogger(__name__)

OUTPUT_ENV = "SEMANN_OUTPUT_DIR"

# one exit code per stage; 2 is left to argparse usage errors
EXIT_CODES = {
    "ingest": 10,
    "screen": 11,
    "describe": 12,
    "anova": 13,
    "cfa": 14,
    "sem": 15,
    "mediation": 16,
    "ann": 17,
    "compare": 18,
}
STAGES = tuple(EXIT_CODES)


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self):
        return EXIT_CODES[self.stage]


def default_output_dir():
    return Path(os.environ.get(OUTPUT_ENV, "semann-out"))


@dataclass
class PipelineConfig:
    data: str | Path
    model: str | Path | None = None
    out: str | Path | None = None
    seed: int = 0
    B: int = 2000
    folds: int = 10
    hidden_sizes: tuple = (8, 4)
    max_iterations: int = 1000
    threshold: float = 0.05
    workers: int = 1
    likert: bool = True
    screening: ScreeningRules = field(default_factory=ScreeningRules)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.out is None:
            self.out = default_output_dir()
        self.out = Path(self.out)

    def ann_config(self):
        return AnnConfig(hidden_sizes=tuple(self.hidden_sizes), max_iterations=self.max_iterations,
                         folds=self.folds, seed=self.seed)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Writer:
    """Writes stage outputs and keeps the manifest current on disk."""

    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.entries = []
        self.completed = []
        self.failed = None

    def text(self, stage, name, content):
        path = self.out / name
        path.write_text(content, encoding="utf-8")
        self.entries.append({"stage": stage, "file": name, "sha256": sha256_file(path)})

    def json(self, stage, name, obj):
        self.text(stage, name, report.dumps(obj))

    def existing(self, stage, name):
        self.entries.append({"stage": stage, "file": name, "sha256": sha256_file(self.out / name)})

    def manifest(self):
        status = "complete" if self.failed is None and len(self.completed) == len(STAGES) else "partial"
        doc = {"status": status, "completed_stages": list(self.completed),
               "failed_stage": self.failed, "files": self.entries}
        (self.out / "manifest.json").write_text(report.dumps(doc), encoding="utf-8")
        return doc


def select_ann_inputs(fit, spec, threshold):
    """Predictors of every ``ann`` target whose path p-value is below ``threshold``."""
    chosen = {}
    for target in spec.ann_targets:
        preds = []
        for pred in spec.predictors_of(target):
            est = fit.path(target, pred)
            if not math.isnan(est.p) and est.p < threshold:
                preds.append(pred)
        chosen[target] = preds
    return chosen


def anova_battery(data, spec):
    scores = data.construct_scores(spec)
    rows = []
    for factor in data.demographics.columns:
        for dep in scores.columns:
            try:
                res = anova_by_factor(data, factor, scores[dep].to_numpy())
            except DegreesOfFreedomError as exc:
                logger.info("skipping ANOVA %s by %s: %s", dep, factor, exc)
                continue
            rows.append({"factor": factor, "dependent": dep, **res.to_dict()})
    return rows


def run_pipeline(config: PipelineConfig):
    """Run every stage in order and return a dict of results keyed by stage.

    Outputs go to ``config.out`` as JSON plus aligned text. A failing stage
    raises :class:`StageError` after the manifest records what completed.
    """
    w = _Writer(config.out)
    results = {}
    stage = "ingest"
    try:
        spec = load_model(config.model) if config.model else default_model()
        data = load_csv(config.data, spec, likert=config.likert)
        w.completed.append(stage)

        stage = "screen"
        rules = config.screening
        meta = set() if data.metadata is None else set(data.metadata.columns)
        skipped = []
        if rules.min_completion_seconds is not None and "completion_time" not in meta:
            skipped.append("time control")
            rules = ScreeningRules(None, rules.dedupe_by_source, rules.consistency_checks)
        if rules.dedupe_by_source and "source_address" not in meta:
            skipped.append("device limit")
            rules = ScreeningRules(rules.min_completion_seconds, False, rules.consistency_checks)
        for rule in skipped:
            warnings.warn(f"{rule} rule skipped: the data has no matching metadata column", stacklevel=2)
        data, log = screen(data, rules)
        write_exclusions(log, config.out / "exclusions.csv")
        w.existing(stage, "exclusions.csv")
        results[stage] = {"n_kept": data.n, "n_excluded": len(log), "skipped_rules": skipped,
                          "by_rule": {r: sum(e.rule == r for e in log) for r in sorted({e.rule for e in log})}}
        w.json(stage, "screening.json", results[stage])
        w.completed.append(stage)

        stage = "describe"
        summary = describe_outcome(data) if data.outcome is not None else None
        demo = data.describe_demographics()
        results[stage] = {"outcome": None if summary is None else summary.to_dict(), "demographics": demo}
        w.json(stage, "descriptives.json", results[stage])
        if summary is not None:
            w.text(stage, "descriptives.txt", report.describe_text(summary, demo))
        w.completed.append(stage)

        stage = "anova"
        rows = anova_battery(data, spec)
        results[stage] = rows
        w.json(stage, "anova.json", rows)
        w.text(stage, "anova.txt", report.anova_text(rows))
        w.completed.append(stage)

        stage = "cfa"
        cfa_spec = spec.measurement_only()
        cfa = fit_ml(cfa_spec, data, FitOptions(cfa=True))
        rel = reliability_report(data, cfa_spec, {k: v for k, v in cfa.std_loadings().items()})
        aves = {r.construct: r.ave for r in rel}
        names = list(cfa_spec.measurement)
        corr = cfa.latent_corr.loc[names, names].to_numpy()
        disc = discriminant_validity(aves, corr, names)
        results[stage] = {"fit": cfa.fit.to_dict(), "reliability": [r.to_dict() for r in rel],
                          "discriminant": disc.to_dict(), "convergence": cfa.to_dict()["convergence"]}
        w.json(stage, "cfa.json", results[stage])
        w.text(stage, "cfa.txt", report.fit_text(cfa.fit, "Measurement model fit") + "\n"
               + report.reliability_text(rel) + "\n" + report.discriminant_text(disc))
        w.completed.append(stage)

        stage = "sem"
        fit = fit_ml(spec, data)
        hyp = test_hypotheses(fit)
        results[stage] = {"fit": fit.fit.to_dict(), "estimates": [e.to_dict() for e in fit.estimates],
                          "hypotheses": [h.to_dict() for h in hyp], "convergence": fit.to_dict()["convergence"],
                          "heywood": list(fit.heywood)}
        w.json(stage, "sem.json", results[stage])
        w.text(stage, "sem.txt", report.fit_text(fit.fit, "Structural model fit") + "\n"
               + report.estimates_text(fit) + "\n" + report.hypotheses_text(hyp))
        w.completed.append(stage)

        stage = "mediation"
        records = bootstrap_mediation(spec, data, B=config.B, seed=config.seed, workers=config.workers,
                                      base_fit=fit) if spec.mediations else []
        results[stage] = [r.to_dict() for r in records]
        w.json(stage, "mediation.json", {"B": config.B, "seed": config.seed, "effects": results[stage]})
        w.text(stage, "mediation.txt", report.mediation_text(records))
        w.completed.append(stage)

        stage = "ann"
        acfg = config.ann_config()
        inputs = select_ann_inputs(fit, spec, config.threshold)
        ann_results = {}
        ann_text = ""
        for target, preds in inputs.items():
            if not preds:
                logger.info("no SEM-significant predictors for %s; ANN skipped", target)
                ann_results[target] = None
                continue
            frame = data.construct_scores(spec, [*preds, target])
            X, y = frame[preds].to_numpy(), frame[target].to_numpy()
            cv = cross_validate(X, y, acfg, preds, target, workers=config.workers)
            if len(preds) >= 2:
                imp = permutation_importance(cv, X, y, acfg, workers=config.workers)
            else:
                imp = ImportanceReport(list(preds), np.ones((len(cv.folds), 1)))
            ann_results[target] = (cv, imp)
            ann_text += report.cv_text(cv) + "\n" + report.importance_text(imp, target) + "\n"
        results[stage] = {t: None if v is None else {"cv": v[0].to_dict(), "importance": v[1].to_dict()}
                          for t, v in ann_results.items()}
        w.json(stage, "ann.json", {"inputs": inputs, "threshold": config.threshold,
                                   "hidden_sizes": list(acfg.hidden_sizes), "folds": acfg.folds,
                                   "models": results[stage]})
        w.text(stage, "ann.txt", ann_text)
        w.completed.append(stage)

        stage = "compare"
        comp = {}
        comp_text = ""
        for target, res in ann_results.items():
            if res is None:
                continue
            imp = res[1]
            sem_std = {p: fit.path(target, p).std for p in imp.feature_names}
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rows = compare_sem_ann(sem_std, imp.as_dict(imp.nri))
            comp[target] = [r.to_dict() for r in rows]
            comp_text += report.comparison_text(rows, target) + "\n"
        results[stage] = comp
        w.json(stage, "comparison.json", comp)
        w.text(stage, "comparison.txt", comp_text)
        w.completed.append(stage)
    except Exception as exc:
        w.failed = stage
        w.manifest()
        raise StageError(stage, exc) from exc
    results["manifest"] = w.manifest()
    return results
