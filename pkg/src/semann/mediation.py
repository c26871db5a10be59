"""Nonparametric bootstrap of standardized direct and indirect effects."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sem.estimation import (FitOptions, SemConvergenceError, SemDataError, fit_model, numerical_hessian,
                             standardized)
from .sem.model import MLObjective, SemModel
from .sem.syntax import Chain, ModelSpec

logger = logging.getLogger(__name__)

# CI levels tried for significance stars, weakest first
STAR_LEVELS = ((0.999, "***"), (0.99, "**"), (0.95, "*"))


class MediationError(RuntimeError):
    pass


@dataclass
class MediationRecord:
    chain: Chain
    a: float
    b: float
    indirect: float
    indirect_ci: tuple
    indirect_stars: str
    direct: float | None
    direct_ci: tuple | None
    direct_stars: str
    classification: str  # "none" | "partial" | "full"
    n_boot: int
    n_failed: int
    degenerate: bool

    def to_dict(self):
        return {
            "relation": str(self.chain),
            "a": self.a, "b": self.b,
            "indirect": self.indirect, "indirect_ci": list(self.indirect_ci),
            "indirect_stars": self.indirect_stars,
            "direct": self.direct,
            "direct_ci": None if self.direct_ci is None else list(self.direct_ci),
            "direct_stars": self.direct_stars,
            "classification": self.classification,
            "n_boot": self.n_boot, "n_failed": self.n_failed, "degenerate": self.degenerate,
        }


def excludes_zero(ci):
    return ci is not None and (ci[0] > 0 or ci[1] < 0)


def classify(indirect_ci, direct_ci):
    if not excludes_zero(indirect_ci):
        return "none"
    return "partial" if excludes_zero(direct_ci) else "full"


def percentile_ci(samples, level=0.95):
    samples = np.sort(np.asarray(samples, dtype=float))
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(samples, [tail, 100.0 - tail])
    return float(lo), float(hi)


def bootstrap_stars(samples):
    """Stars from the most stringent percentile CI (99.9/99/95%) that excludes zero."""
    for level, stars in STAR_LEVELS:
        if excludes_zero(percentile_ci(samples, level)):
            return stars
    return ""


def chain_effects(model: SemModel, theta, chains):
    """Standardized (a, b, direct) for each chain; direct is nan when the path is absent."""
    std, _ = standardized(model, theta)
    out = np.empty((len(chains), 3))
    for k, ch in enumerate(chains):
        out[k, 0] = std[(ch.mediator, "~", ch.source)]
        out[k, 1] = std[(ch.target, "~", ch.mediator)]
        out[k, 2] = std.get((ch.target, "~", ch.source), math.nan)
    return out


def replicate_rng(seed, index):
    """Independent stream for one replicate, identical in serial and parallel runs."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _replicates(model, X, start, inv_hessian, chains, seed, indices, options):
    n = X.shape[0]
    out = []
    for r in indices:
        rows = replicate_rng(seed, r).integers(0, n, n)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fit_model(model, X[rows], FitOptions(
                    max_iter=options.max_iter, gtol=options.gtol, ftol=options.ftol,
                    standard_errors=False, start=start, inv_hessian=inv_hessian))
            out.append((r, chain_effects(model, fit.theta, chains)))
        except (SemConvergenceError, SemDataError, ValueError, np.linalg.LinAlgError):
            out.append((r, None))
    return out


def _warm_inverse_hessian(model, base_fit):
    # the full-data curvature is close to every resample's, so quasi-Newton
    # refits seeded with it converge in a handful of steps
    H = numerical_hessian(MLObjective(model, base_fit.S).gradient, base_fit.theta)
    try:
        np.linalg.cholesky(H)
        return np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return base_fit.inv_hessian


def _run_chunk(args):
    return _replicates(*args)


def bootstrap_mediation(spec: ModelSpec, data, chains=None, B=2000, seed=0, level=0.95,
                        workers=1, options: FitOptions | None = None, base_fit=None):
    """Bootstrap every chain's standardized indirect (a*b) and direct effects.

    Whole respondent rows are resampled with replacement and the full model
    is refitted on each resample, warm-started at the full-data estimate.
    Replicates that fail to converge are dropped and counted.
    """
    if B < 200:
        raise ValueError("B must be at least 200")
    chains = list(spec.mediations if chains is None else chains)
    chains = [c if isinstance(c, Chain) else Chain(*c) for c in chains]
    if not chains:
        return []
    paths = set(spec.paths())
    for ch in chains:
        for pair in ((ch.mediator, ch.source), (ch.target, ch.mediator)):
            if pair not in paths:
                raise ValueError(f"chain {ch} references the unfitted path {pair[1]} -> {pair[0]}")
    options = options or FitOptions()
    model = SemModel(spec)
    X = data.matrix(model.observed_names)
    if base_fit is None:
        base_fit = fit_model(model, X, FitOptions(max_iter=options.max_iter, gtol=options.gtol,
                                                  ftol=options.ftol, standard_errors=False))
    point = chain_effects(model, base_fit.theta, chains)
    inv_hessian = _warm_inverse_hessian(model, base_fit)

    indices = list(range(B))
    if workers > 1:
        chunks = [indices[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(model, X, base_fit.theta, inv_hessian, chains, seed, c, options)
                                          for c in chunks])
            results = [item for part in parts for item in part]
    else:
        results = _replicates(model, X, base_fit.theta, inv_hessian, chains, seed, indices, options)
    results.sort(key=lambda t: t[0])
    good = [eff for _, eff in results if eff is not None]
    n_failed = B - len(good)
    rate = n_failed / B
    if rate > 0.5:
        raise MediationError(f"{n_failed} of {B} bootstrap replicates failed")
    if rate > 0.1:
        warnings.warn(f"{n_failed} of {B} bootstrap replicates failed to converge", stacklevel=2)
    samples = np.stack(good)  # (B_ok, n_chains, 3)

    records = []
    for k, ch in enumerate(chains):
        a, b, direct = point[k]
        ind = samples[:, k, 0] * samples[:, k, 1]
        ind_ci = percentile_ci(ind, level)
        has_direct = not math.isnan(direct)
        if has_direct:
            dir_samples = samples[:, k, 2]
            dir_ci = percentile_ci(dir_samples, level)
            dir_stars = bootstrap_stars(dir_samples)
        else:
            dir_ci, dir_stars = None, ""
        degenerate = ind_ci[0] == ind_ci[1]
        if degenerate:
            logger.warning("zero-width indirect CI for %s", ch)
        records.append(MediationRecord(
            chain=ch, a=float(a), b=float(b), indirect=float(a * b), indirect_ci=ind_ci,
            indirect_stars=bootstrap_stars(ind),
            direct=float(direct) if has_direct else None, direct_ci=dir_ci, direct_stars=dir_stars,
            classification=classify(ind_ci, dir_ci),
            n_boot=len(good), n_failed=n_failed, degenerate=degenerate))
    return records
