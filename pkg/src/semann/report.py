"""Deterministic JSON and aligned text renderings of analysis results."""
from __future__ import annotations

import json
import math

import numpy as np


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


def fmt(v, digits=3):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "-"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}f}"


def table(headers, rows, title=None, digits=3):
    """Plain-text table with right-aligned numeric columns."""
    cells = [[fmt(c, digits) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for j, c in enumerate(row):
            widths[j] = max(widths[j], len(c))
    numeric = [all(not isinstance(r[j], str) for r in rows) if rows else False for j in range(len(headers))]

    def line(vals):
        return "  ".join(v.rjust(w) if num else v.ljust(w) for v, w, num in zip(vals, widths, numeric)).rstrip()

    out = []
    if title:
        out.append(title)
    out.append(line(list(headers)))
    out.append("  ".join("-" * w for w in widths))
    out.extend(line(r) for r in cells)
    return "\n".join(out) + "\n"


def describe_text(summary, demographics=None):
    d = summary.to_dict()
    rows = [[b["label"], b["frequency"], b["proportion"]] for b in d["bins"]]
    rows.append(["Total", d["total"], 100.0])
    text = table(["Accepted gap", "Frequency", "Proportion (%)"], rows, "Outcome distribution", digits=2)
    text += f"Mean = {d['mean']:.2f}  SD = {d['sd']:.2f}\n"
    if demographics:
        for field, levels in demographics.items():
            text += "\n" + table(["Level", "Frequency", "Proportion (%)"],
                                 [[lv["level"], lv["frequency"], lv["proportion"]] for lv in levels],
                                 field, digits=2)
    return text


def anova_text(rows):
    body = [[r["factor"], r["dependent"], f"{fmt(r['F'], 2)}{r['stars']}", r["df1"], r["df2"], r["p"], r["eta_p_sq"]]
            for r in rows]
    return table(["Factor", "Dependent", "F", "df1", "df2", "p", "eta_p^2"], body, "One-way ANOVA")


def fit_text(fit, title="Goodness of fit"):
    d = fit.to_dict()
    rows = []
    for name in ("chi_square", "df", "p_value", "chi2_df", "rmsea", "gfi", "cfi", "tli"):
        if name in d:
            flag = d.get("pass", {}).get(name)
            rows.append([name, d[name], "" if flag is None else ("pass" if flag else "fail")])
    return table(["Index", "Value", "Criterion"], rows, title)


def reliability_text(rows):
    body = []
    for r in rows:
        for j, (item, lam) in enumerate(r.loadings.items()):
            body.append([r.construct if j == 0 else "", item, lam,
                         r.alpha if j == 0 else None, r.cr if j == 0 else None, r.ave if j == 0 else None])
    return table(["Construct", "Item", "Loading", "Alpha", "CR", "AVE"], body, "Reliability and convergent validity")


def discriminant_text(dm):
    rows = []
    for i, n in enumerate(dm.names):
        rows.append([n] + [dm.matrix[i, j] if j <= i else None for j in range(len(dm.names))])
    return table(["", *dm.names], rows, "Discriminant validity (sqrt(AVE) on the diagonal)")


def estimates_text(fit, ops=("~",)):
    rows = [[f"{e.lhs} {e.op} {e.rhs}", e.estimate, e.se, e.std, e.p, e.stars]
            for e in fit.estimates if e.op in ops]
    return table(["Parameter", "Estimate", "SE", "Std", "p", ""], rows, "Parameter estimates")


def hypotheses_text(results):
    rows = [[h.label, f"{h.predictor} -> {h.target}", f"{fmt(h.estimate)}{h.stars}", h.p,
             "Supported" if h.supported else "Not supported"] for h in results]
    return table(["Hypothesis", "Path", "Std estimate", "p", "Result"], rows, "Hypothesis tests")


def mediation_text(records):
    rows = []
    for r in records:
        rows.append([str(r.chain), f"{fmt(r.indirect)}{r.indirect_stars}",
                     f"[{fmt(r.indirect_ci[0])}, {fmt(r.indirect_ci[1])}]",
                     "-" if r.direct is None else f"{fmt(r.direct)}{r.direct_stars}",
                     "-" if r.direct_ci is None else f"[{fmt(r.direct_ci[0])}, {fmt(r.direct_ci[1])}]",
                     r.classification])
    return table(["Relation", "Indirect", "CI", "Direct", "CI", "Mediation"], rows, "Mediation effects")


def cv_text(cv):
    s = cv.summary()
    rows = [[f"Round {f.fold + 1}", f.train_rmse, f.test_rmse] for f in cv.folds]
    rows.append(["Mean", s["train_mean"], s["test_mean"]])
    rows.append(["SD", s["train_sd"], s["test_sd"]])
    return table(["Cross-validation", "Training RMSE", "Testing RMSE"], rows, f"RMSE, output {cv.target_name}")


def importance_text(report, target=""):
    rows = [[f"Round {k + 1}", *row] for k, row in enumerate(report.fold_importance)]
    rows.append(["Mean", *report.mean])
    rows.append(["NRI (%)", *report.nri])
    return table(["Cross-validation", *report.feature_names], rows, f"Importance of inputs on {target}".rstrip(),
                 digits=2)


def comparison_text(rows, target=""):
    body = [[r.label, r.sem_estimate, r.nri, r.sem_rank, r.ann_rank, r.match + (" (tie)" if r.tie else "")]
            for r in rows]
    return table(["Input", "SEM estimate", "NRI (%)", "SEM rank", "ANN rank", "Match"], body,
                 f"SEM vs ANN, output {target}".rstrip(), digits=2)
