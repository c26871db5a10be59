"""Synthetic respondents drawn from known SEM parameters."""
from __future__ import annotations

import json
import math
from statistics import NormalDist
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import Dataset
from .sem.model import SemModel, SemParameters, implied_covariance
from .sem.syntax import ModelSpec, default_model, parse_model

DEFAULT_THRESHOLDS = (-1.5, -0.5, 0.5, 1.5)
LIKERT_CENTER = 3.0

# respondent shares per level, ordered as in the bundled model
SAMPLE_MARGINALS = {
    "gender": [148, 455],
    "age_group": [477, 126],
    "education": [8, 114, 400, 81],
    "license": [37, 566],
    "driving_years": [49, 115, 233, 108, 98],
    "transport_practitioner": [362, 241],
    "collision_experience": [273, 330],
}


class SynthError(ValueError):
    pass


@dataclass
class SynthTruth:
    spec: ModelSpec
    params: SemParameters
    n: int
    seed: int = 0
    likert_mode: str = "discretized"
    thresholds: dict = field(default_factory=dict)  # item -> 4 cut points
    outcome_mean: float = 5.35
    outcome_sd: float = 1.43
    marginals: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.likert_mode not in ("continuous", "discretized"):
            raise SynthError("likert_mode must be 'continuous' or 'discretized'")
        if self.n < 1:
            raise SynthError("n must be positive")
        for item, cuts in self.thresholds.items():
            if len(cuts) != 4 or np.any(np.diff(cuts) <= 0):
                raise SynthError(f"thresholds for {item} must be 4 strictly increasing values")
        try:
            np.linalg.cholesky(self.params.phi)
        except np.linalg.LinAlgError:
            raise SynthError("generating phi is not positive definite") from None

    def cuts(self, item):
        return np.asarray(self.thresholds.get(item, DEFAULT_THRESHOLDS), dtype=float)

    def to_dict(self):
        p = self.params
        return {
            "model": self.spec.to_text(),
            "n": self.n,
            "seed": self.seed,
            "likert_mode": self.likert_mode,
            "thresholds": {k: list(map(float, v)) for k, v in self.thresholds.items()},
            "outcome": {"mean": self.outcome_mean, "sd": self.outcome_sd},
            "marginals": {k: list(v) for k, v in self.marginals.items()},
            "parameters": {
                name: getattr(p, name).tolist()
                for name in ("lambda_x", "lambda_y", "A", "B", "phi", "psi", "theta_delta", "theta_epsilon")
            } | {"x_names": p.x_names, "y_names": p.y_names,
                 "xi_names": p.xi_names, "eta_names": p.eta_names},
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def truth_from_dict(d) -> SynthTruth:
    """Build a truth from its JSON form.

    Either ``parameters`` (raw matrices as written by :meth:`SynthTruth.to_dict`)
    or the standardized shorthand ``loadings`` / ``paths`` / ``correlations``
    may be given.
    """
    spec = parse_model(d["model"])
    kwargs = dict(
        n=int(d.get("n", 603)), seed=int(d.get("seed", 0)),
        likert_mode=d.get("likert_mode", "discretized"),
        thresholds={k: tuple(v) for k, v in d.get("thresholds", {}).items()},
        outcome_mean=float(d.get("outcome", {}).get("mean", 5.35)),
        outcome_sd=float(d.get("outcome", {}).get("sd", 1.43)),
        marginals=d.get("marginals", {}),
    )
    if "parameters" in d:
        raw = d["parameters"]
        params = SemParameters(**{k: np.asarray(raw[k], dtype=float) for k in
                                  ("lambda_x", "lambda_y", "A", "B", "phi", "psi", "theta_delta", "theta_epsilon")},
                               x_names=raw["x_names"], y_names=raw["y_names"],
                               xi_names=raw["xi_names"], eta_names=raw["eta_names"])
    else:
        paths = {}
        for key, v in d.get("paths", {}).items():
            target, pred = (s.strip() for s in key.split("~"))
            paths[(target, pred)] = float(v)
        corr = {}
        for key, v in d.get("correlations", {}).items():
            a, b = (s.strip() for s in key.split("~~"))
            corr[(a, b)] = float(v)
        params = standardized_truth(spec, d.get("loadings", {}), paths, corr)
    return SynthTruth(spec=spec, params=params, **kwargs)


def load_truth(path) -> SynthTruth:
    return truth_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def standardized_truth(spec: ModelSpec, loadings, paths, correlations=None, default_loading=0.7):
    """Parameters in which every latent and indicator has unit variance.

    ``loadings`` maps item -> standardized loading, ``paths`` maps
    ``(target, predictor)`` -> standardized coefficient, ``correlations`` maps
    pairs of exogenous variables (or of ``~~``-linked endogenous disturbances)
    to a correlation.  Disturbance variances are solved so that each
    endogenous variable has unit total variance.
    """
    correlations = dict(correlations or {})
    model = SemModel(spec)
    names = model.latent_names
    idx = model.lat_index
    m, nx = len(names), model.n_xi
    lam = np.zeros((model.n_observed, m))
    theta = np.zeros((model.n_observed, model.n_observed))
    for v in names:
        items = spec.measurement.get(v, [v])
        for it in items:
            i = model.obs_index[it]
            if v in model.single_indicator:
                lam[i, idx[v]] = 1.0
            else:
                lam[i, idx[v]] = float(loadings.get(it, default_loading))
                theta[i, i] = 1.0 - lam[i, idx[v]] ** 2
    beta = np.zeros((m, m))
    declared = set(spec.paths())
    for (t, p), b in paths.items():
        if (t, p) not in declared:
            raise SynthError(f"path {p} -> {t} is not in the model")
        beta[idx[t], idx[p]] = b
    psi = np.zeros((m, m))
    psi[:nx, :nx] = np.eye(nx)

    def corr_of(a, b):
        return correlations.get((a, b), correlations.get((b, a), 0.0))

    for a in model.xi_names:
        for b in model.xi_names:
            if a != b:
                psi[idx[a], idx[b]] = corr_of(a, b)
    T = np.linalg.inv(np.eye(m) - beta)
    pending = [(a, b) for a, b in spec.covariances if a in model.eta_names]
    for v in model.eta_names:
        j = idx[v]
        psi[j, j] = 0.0
        C = T @ psi @ T.T
        resid = 1.0 - C[j, j]
        if resid <= 0:
            raise SynthError(f"paths into {v} explain more than its unit variance")
        psi[j, j] = resid
        for a, b in list(pending):
            if psi[idx[a], idx[a]] > 0 and psi[idx[b], idx[b]] > 0:
                r = corr_of(a, b)
                cov = r * np.sqrt(psi[idx[a], idx[a]] * psi[idx[b], idx[b]])
                psi[idx[a], idx[b]] = psi[idx[b], idx[a]] = cov
                pending.remove((a, b))
    px = model.px
    return SemParameters(
        lambda_x=lam[:px, :nx], lambda_y=lam[px:, nx:],
        A=beta[nx:, nx:], B=beta[nx:, :nx],
        phi=psi[:nx, :nx], psi=psi[nx:, nx:],
        theta_delta=theta[:px, :px], theta_epsilon=theta[px:, px:],
        x_names=model.x_names, y_names=model.y_names,
        xi_names=model.xi_names, eta_names=model.eta_names)


def _codes_from_normal(z, counts):
    p = np.cumsum(counts, dtype=float) / np.sum(counts)
    std = NormalDist()
    cuts = np.array([-math.inf if q <= 0 else math.inf if q >= 1 else std.inv_cdf(q) for q in p[:-1]])
    return np.searchsorted(cuts, z)


def _code_moments(counts):
    p = np.asarray(counts, dtype=float) / np.sum(counts)
    k = np.arange(p.size)
    mean = float(p @ k)
    return mean, float(np.sqrt(p @ (k - mean) ** 2))


def _chol(mat, what):
    mat = np.atleast_2d(mat)
    if mat.size == 0:
        return mat
    # zero-variance rows (fixed errors) are allowed; factor the active block only
    active = np.diag(mat) > 0
    L = np.zeros_like(mat)
    if active.any():
        try:
            L[np.ix_(active, active)] = np.linalg.cholesky(mat[np.ix_(active, active)])
        except np.linalg.LinAlgError:
            raise SynthError(f"{what} is not positive definite") from None
    return L


def generate(truth: SynthTruth) -> Dataset:
    """Draw ``truth.n`` respondents; deterministic given ``truth.seed``."""
    spec, p = truth.spec, truth.params
    rng = np.random.default_rng(np.random.SeedSequence([truth.seed, 0x5E5A]))
    n = truth.n
    n_xi, n_eta = p.phi.shape[0], p.psi.shape[0]
    xi = rng.standard_normal((n, n_xi)) @ _chol(p.phi, "phi").T
    marginals = {**SAMPLE_MARGINALS, **truth.marginals}
    demo_codes = {}
    for j, name in enumerate(p.xi_names):
        if name in spec.demographics:
            counts = marginals.get(name, [1] * len(spec.demographics[name]))
            if len(counts) != len(spec.demographics[name]):
                raise SynthError(f"marginals for {name} do not match its declared levels")
            z = xi[:, j] / np.sqrt(p.phi[j, j]) if p.phi[j, j] > 0 else rng.standard_normal(n)
            codes = _codes_from_normal(z, counts)
            mu, sd = _code_moments(counts)
            demo_codes[name] = codes
            # structural equations see the code on the generating variable's scale
            xi[:, j] = (codes - mu) / sd * np.sqrt(p.phi[j, j])
    zeta = rng.standard_normal((n, n_eta)) @ _chol(p.psi, "psi").T
    if n_eta:
        T = np.linalg.inv(np.eye(n_eta) - p.A)
        eta = (xi @ p.B.T + zeta) @ T.T
    else:
        eta = np.zeros((n, 0))
    delta = rng.standard_normal((n, p.theta_delta.shape[0])) * np.sqrt(np.clip(np.diag(p.theta_delta), 0, None))
    eps = rng.standard_normal((n, p.theta_epsilon.shape[0])) * np.sqrt(np.clip(np.diag(p.theta_epsilon), 0, None))
    x = xi @ p.lambda_x.T + delta
    y = eta @ p.lambda_y.T + eps
    obs = dict(zip(p.x_names, x.T)) | dict(zip(p.y_names, y.T))
    sd_implied = dict(zip(p.observed_names, np.sqrt(np.diag(implied_covariance(p)))))

    items = {}
    for it in spec.items:
        if it not in obs:
            raise SynthError(f"item {it} is not generated by the parameters")
        v = obs[it]
        if truth.likert_mode == "continuous":
            items[it] = LIKERT_CENTER + v
        else:
            z = v / sd_implied[it] if sd_implied[it] > 0 else v
            items[it] = 1 + np.searchsorted(truth.cuts(it), z)
    items = pd.DataFrame(items)
    if truth.likert_mode == "discretized":
        items = items.astype(int)

    demo = {}
    for name, levels in spec.demographics.items():
        if name in demo_codes:
            demo[name] = demo_codes[name]
        else:
            counts = np.asarray(marginals.get(name, [1] * len(levels)), dtype=float)
            demo[name] = rng.choice(len(levels), size=n, p=counts / counts.sum())
    demographics = pd.DataFrame(demo, columns=list(spec.demographics), index=range(n)).astype(int)

    outcome = None
    if spec.outcome:
        if spec.outcome in obs:
            v = obs[spec.outcome]
            sd = sd_implied[spec.outcome]
            z = v / sd if sd > 0 else v
        else:
            z = rng.standard_normal(n)
        outcome = np.maximum(truth.outcome_mean + truth.outcome_sd * z, 0.5)
        if truth.likert_mode == "discretized":
            # the questionnaire records whole seconds
            outcome = np.maximum(np.round(outcome), 1.0)

    metadata = pd.DataFrame({
        "completion_time": np.round(rng.uniform(300.0, 1200.0, n), 1),
        "source_address": [f"10.{(i >> 16) & 255}.{(i >> 8) & 255}.{i & 255}" for i in range(n)],
    })
    return Dataset(
        respondent_id=np.array([f"S{i + 1:05d}" for i in range(n)], dtype=object),
        items=items, demographics=demographics, outcome=outcome,
        levels={k: list(v) for k, v in spec.demographics.items()},
        outcome_name=spec.outcome, metadata=metadata,
        likert=truth.likert_mode == "discretized",
    )


# Standardized loadings of the 43 questionnaire items.
PAPER_LOADINGS = {
    "UT1": 0.74, "UT2": 0.76, "UT3": 0.80, "UT4": 0.82,
    "TST1": 0.76, "TST2": 0.70, "TST3": 0.83,
    "UADT1": 0.78, "UADT2": 0.79, "UADT3": 0.78,
    "TSADT1": 0.81, "TSADT2": 0.77, "TSADT3": 0.75,
    "Violation1": 0.81, "Violation2": 0.77, "Violation3": 0.82, "Violation4": 0.791,
    "Error1": 0.76, "Error2": 0.78, "Error3": 0.68, "Error4": 0.78,
    "Lapse1": 0.76, "Lapse2": 0.85, "Lapse3": 0.80, "Lapse4": 0.86,
    "Aggressive1": 0.85, "Aggressive2": 0.84, "Aggressive3": 0.86, "Aggressive4": 0.83,
    "Positive1": 0.75, "Positive2": 0.78, "Positive3": 0.79, "Positive4": 0.78,
    "TSAT1": 0.83, "TSAT2": 0.80, "TSAT3": 0.83, "TSAT4": 0.75, "TSAT5": 0.74, "TSAT6": 0.80,
    "RP1": 0.71, "RP2": 0.78, "RP3": 0.67, "RP4": 0.71,
}

PAPER_PATHS = {
    ("TST", "UT"): 0.48, ("TSADT", "UADT"): 0.71,
    ("TSAT", "UT"): 0.28, ("TSAT", "UADT"): 0.37, ("TSAT", "TST"): 0.14, ("TSAT", "TSADT"): 0.38,
    ("TSAT", "license"): -0.10,
    ("gap", "TSAT"): -0.02, ("gap", "RP"): 0.49, ("gap", "Positive"): 0.30, ("gap", "Violations"): -0.16,
    ("gap", "Aggressive"): 0.06, ("gap", "Errors"): 0.02,
    ("RP", "TSAT"): -0.17, ("RP", "Positive"): 0.23, ("RP", "Errors"): -0.36, ("RP", "Aggressive"): -0.12,
    ("RP", "TST"): -0.07, ("RP", "TSADT"): -0.03,
    ("UT", "age_group"): 0.11, ("UT", "driving_years"): 0.18, ("UT", "education"): -0.15,
    ("UT", "transport_practitioner"): 0.23,
    ("UADT", "driving_years"): 0.16, ("UADT", "transport_practitioner"): 0.22,
    ("TST", "age_group"): -0.09, ("TST", "education"): 0.09, ("TST", "gender"): -0.09,
}

# correlations among the behavioural-tendency constructs, and the UT/UADT residual link
PAPER_CORRELATIONS = {
    ("Violations", "Errors"): 0.49, ("Violations", "Lapses"): 0.69, ("Violations", "Aggressive"): 0.48,
    ("Violations", "Positive"): -0.64, ("Errors", "Lapses"): 0.64, ("Errors", "Aggressive"): 0.42,
    ("Errors", "Positive"): -0.59, ("Lapses", "Aggressive"): 0.62, ("Lapses", "Positive"): -0.73,
    ("Aggressive", "Positive"): -0.62,
    ("UT", "UADT"): 0.70,
}


def survey_truth(n=603, seed=0, likert_mode="discretized", spec=None) -> SynthTruth:
    """Truth for the bundled model at the reported standardized estimates."""
    spec = spec or default_model()
    params = standardized_truth(spec, PAPER_LOADINGS, PAPER_PATHS, PAPER_CORRELATIONS)
    return SynthTruth(spec=spec, params=params, n=n, seed=seed, likert_mode=likert_mode)
