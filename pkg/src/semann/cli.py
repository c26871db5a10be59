"""Command-line entry point: ``semann <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, report
from .ann import AnnConfig, ImportanceReport, compare_sem_ann, cross_validate, permutation_importance
from .ingest import IngestError, load_csv
from .mediation import bootstrap_mediation
from .pipeline import EXIT_CODES, anova_battery, PipelineConfig, StageError, default_output_dir, run_pipeline
from .psychometrics import discriminant_validity, reliability_report
from .sem.estimation import FitOptions, fit_ml
from .sem.hypotheses import test_hypotheses
from .sem.syntax import ModelSyntaxError, ModelValidationError, default_model, load_model
from .stats import describe_outcome
from .synth import generate, load_truth, survey_truth

logger = logging.getLogger("semann")

# subcommand -> pipeline stage whose exit code it reports on failure
STAGE_OF = {"describe": "describe", "anova": "anova", "reliability": "cfa", "cfa": "cfa", "sem": "sem",
            "mediate": "mediation", "ann": "ann", "compare": "compare", "simulate": "ingest"}


def _pair(text):
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected two comma-separated integers, e.g. 8,4") from None
    return a, b


def _names(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="respondent CSV")
    common.add_argument("--model", help="model syntax file (default: bundled model)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (directory for 'run')")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--continuous", action="store_true",
                        help="allow real-valued item scores instead of 1-5 Likert codes")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="semann", description="Hybrid SEM and neural-network survey analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("describe", parents=[common], help="outcome frequency table and demographics")
    sub.add_parser("anova", parents=[common], help="one-way ANOVA of construct scores by demographic")
    sub.add_parser("reliability", parents=[common], help="alpha, CR, AVE and discriminant validity")
    sub.add_parser("cfa", parents=[common], help="confirmatory factor analysis")
    sem = sub.add_parser("sem", parents=[common], help="structural model and hypothesis tests")
    sem.add_argument("--alpha", type=float, default=0.05)
    med = sub.add_parser("mediate", parents=[common], help="bootstrap mediation effects")
    med.add_argument("--B", type=int, default=2000, dest="B")
    ann = sub.add_parser("ann", parents=[common], help="cross-validated network and input importance")
    ann.add_argument("--target", required=True)
    ann.add_argument("--inputs", type=_names, help="comma-separated inputs (default: the target's predictors)")
    _ann_flags(ann)
    cmp_ = sub.add_parser("compare", parents=[common], help="rank SEM estimates against NRI")
    cmp_.add_argument("--table", required=True, help="CSV with columns input, sem_estimate, nri [, target]")
    sim = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    sim.add_argument("--truth", help="truth JSON (default: the bundled survey-scale parameters)")
    sim.add_argument("--n", type=int, default=603)
    run = sub.add_parser("run", parents=[common], help="full two-stage pipeline")
    run.add_argument("--B", type=int, default=2000, dest="B")
    run.add_argument("--threshold", type=float, default=0.05)
    _ann_flags(run)
    return p


def _ann_flags(p):
    p.add_argument("--hidden", type=_pair, default=(8, 4), help="hidden layer sizes, e.g. 8,4")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=1000, dest="max_iter")


def _emit(args, obj, text):
    content = report.dumps(obj) if args.format == "json" else text
    if args.out:
        Path(args.out).write_text(content, encoding="utf-8")
    else:
        sys.stdout.write(content)


def _spec(args):
    return load_model(args.model) if args.model else default_model()


def _data(args, spec):
    if not args.data:
        raise IngestError("--data is required")
    return load_csv(args.data, spec, likert=not args.continuous)


def cmd_describe(args):
    spec = _spec(args)
    data = _data(args, spec)
    summary = describe_outcome(data)
    demo = data.describe_demographics()
    _emit(args, {"outcome": summary.to_dict(), "demographics": demo}, report.describe_text(summary, demo))


def cmd_anova(args):
    spec = _spec(args)
    rows = anova_battery(_data(args, spec), spec)
    _emit(args, rows, report.anova_text(rows))


def _cfa(args):
    spec = _spec(args).measurement_only()
    data = _data(args, spec)
    return spec, data, fit_ml(spec, data, FitOptions(cfa=True))


def cmd_reliability(args):
    spec, data, cfa = _cfa(args)
    rel = reliability_report(data, spec, cfa.std_loadings())
    names = list(spec.measurement)
    disc = discriminant_validity({r.construct: r.ave for r in rel}, cfa.latent_corr.loc[names, names].to_numpy(), names)
    _emit(args, {"reliability": [r.to_dict() for r in rel], "discriminant": disc.to_dict()},
          report.reliability_text(rel) + "\n" + report.discriminant_text(disc))


def cmd_cfa(args):
    _, _, cfa = _cfa(args)
    loadings = [e.to_dict() for e in cfa.estimates if e.op == "=~"]
    _emit(args, {"fit": cfa.fit.to_dict(), "loadings": loadings},
          report.fit_text(cfa.fit, "Measurement model fit") + "\n" + report.estimates_text(cfa, ops=("=~",)))


def cmd_sem(args):
    spec = _spec(args)
    fit = fit_ml(spec, _data(args, spec))
    hyp = test_hypotheses(fit, alpha=args.alpha)
    _emit(args, {**fit.to_dict(), "hypotheses": [h.to_dict() for h in hyp]},
          report.fit_text(fit.fit, "Structural model fit") + "\n" + report.estimates_text(fit)
          + "\n" + report.hypotheses_text(hyp))


def cmd_mediate(args):
    spec = _spec(args)
    records = bootstrap_mediation(spec, _data(args, spec), B=args.B, seed=args.seed, workers=args.workers)
    _emit(args, {"B": args.B, "seed": args.seed, "effects": [r.to_dict() for r in records]},
          report.mediation_text(records))


def cmd_ann(args):
    spec = _spec(args)
    data = _data(args, spec)
    inputs = args.inputs or spec.predictors_of(args.target)
    if not inputs:
        raise ValueError(f"{args.target} has no predictors; pass --inputs")
    cfg = AnnConfig(hidden_sizes=args.hidden, max_iterations=args.max_iter, folds=args.folds, seed=args.seed)
    frame = data.construct_scores(spec, [*inputs, args.target])
    X, y = frame[inputs].to_numpy(), frame[args.target].to_numpy()
    cv = cross_validate(X, y, cfg, inputs, args.target, workers=args.workers)
    if len(inputs) >= 2:
        imp = permutation_importance(cv, X, y, cfg, workers=args.workers)
    else:
        imp = ImportanceReport(list(inputs), np.ones((len(cv.folds), 1)))
    _emit(args, {"cv": cv.to_dict(), "importance": imp.to_dict()},
          report.cv_text(cv) + "\n" + report.importance_text(imp, args.target))


def read_comparison_table(path):
    """Group rows of an ``input, sem_estimate, nri[, target]`` CSV by target, in file order."""
    groups = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            target = (row.get("target") or "").strip()
            nri = row["nri"].strip().rstrip("%")
            groups.setdefault(target, ({}, {}))
            groups[target][0][row["input"].strip()] = float(row["sem_estimate"])
            groups[target][1][row["input"].strip()] = float(nri)
    return groups


def cmd_compare(args):
    out, text = {}, ""
    for target, (sem, nri) in read_comparison_table(args.table).items():
        rows = compare_sem_ann(sem, nri)
        out[target] = [r.to_dict() for r in rows]
        text += report.comparison_text(rows, target) + "\n"
    _emit(args, out, text)


def cmd_simulate(args):
    if not args.out:
        raise ValueError("--out is required for simulate")
    mode = "continuous" if args.continuous else "discretized"
    if args.truth:
        truth = load_truth(args.truth)
        truth.n, truth.seed, truth.likert_mode = args.n, args.seed, mode
    else:
        truth = survey_truth(n=args.n, seed=args.seed, likert_mode=mode, spec=_spec(args) if args.model else None)
    generate(truth).to_csv(args.out)


def cmd_run(args):
    if not args.data:
        raise IngestError("--data is required")
    cfg = PipelineConfig(args.data, args.model, args.out or default_output_dir(), seed=args.seed, B=args.B,
                         folds=args.folds, hidden_sizes=args.hidden, max_iterations=args.max_iter,
                         threshold=args.threshold, workers=args.workers, likert=not args.continuous)
    res = run_pipeline(cfg)
    sys.stdout.write(f"wrote {len(res['manifest']['files'])} files to {cfg.out}\n")


COMMANDS = {
    "describe": cmd_describe, "anova": cmd_anova, "reliability": cmd_reliability, "cfa": cmd_cfa,
    "sem": cmd_sem, "mediate": cmd_mediate, "ann": cmd_ann, "compare": cmd_compare,
    "simulate": cmd_simulate, "run": cmd_run,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (IngestError, ModelSyntaxError, ModelValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["ingest"]
    except Exception as exc:  # analysis failure inside a single-stage command
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[STAGE_OF.get(args.command, "ingest")]
    return 0


if __name__ == "__main__":
    sys.exit(main())
