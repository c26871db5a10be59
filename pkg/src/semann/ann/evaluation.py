"""Cross-validated RMSE, permutation importance and SEM/ANN ranking comparison."""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .network import AnnConfig, AnnModel
from .scg import train_scg


class FoldError(ValueError):
    pass


class LabelMismatchError(ValueError):
    pass


def fold_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in key)]))


def fold_indices(n, folds, seed=0):
    """Seeded shuffle of ``range(n)`` split into ``folds`` near-equal test sets."""
    if n < folds:
        raise FoldError(f"{n} rows cannot fill {folds} folds")
    order = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF01D])).permutation(n)
    parts = np.array_split(order, folds)
    if min(len(p) for p in parts) < 1:
        raise FoldError("a fold has no rows")
    return [np.sort(p) for p in parts]


@dataclass
class FoldResult:
    fold: int
    train_rmse: float
    test_rmse: float
    test_index: np.ndarray
    model: AnnModel


@dataclass
class CrossValidation:
    folds: list
    feature_names: list
    target_name: str = "target"

    @property
    def train_rmse(self):
        return np.array([f.train_rmse for f in self.folds])

    @property
    def test_rmse(self):
        return np.array([f.test_rmse for f in self.folds])

    def summary(self):
        """Mean and sample SD of the per-fold RMSEs."""
        tr, te = self.train_rmse, self.test_rmse
        return {"train_mean": float(tr.mean()), "train_sd": float(tr.std(ddof=1)),
                "test_mean": float(te.mean()), "test_sd": float(te.std(ddof=1))}

    def to_dict(self):
        return {
            "target": self.target_name,
            "features": list(self.feature_names),
            "rounds": [{"round": f.fold + 1, "train_rmse": f.train_rmse, "test_rmse": f.test_rmse,
                        "n_test": int(len(f.test_index)), "iterations": f.model.iterations}
                       for f in self.folds],
            "summary": self.summary(),
        }


def _train_fold(args):
    X, y, test, k, config, names = args
    mask = np.ones(len(y), dtype=bool)
    mask[test] = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train_scg(X[mask], y[mask], config, rng=fold_rng(config.seed, 0x7A1, k), feature_names=names)
    return FoldResult(k, model.rmse(X[mask], y[mask]), model.rmse(X[test], y[test]), test, model)


def cross_validate(inputs, target, config: AnnConfig | None = None, feature_names=None,
                   target_name="target", workers=1):
    """Train one network per fold and report scaled training and testing RMSE.

    Each fold's network is scaled from its own training rows and seeded from
    ``(seed, fold)``, so results do not depend on ``workers``.
    """
    config = config or AnnConfig()
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(target, dtype=float).ravel()
    names = list(feature_names) if feature_names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    tests = fold_indices(len(y), config.folds, config.seed)
    jobs = [(X, y, t, k, config, names) for k, t in enumerate(tests)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_fold, jobs))
    else:
        results = [_train_fold(j) for j in jobs]
    results.sort(key=lambda f: f.fold)
    return CrossValidation(results, names, target_name)


@dataclass
class ImportanceReport:
    feature_names: list
    fold_importance: np.ndarray  # (folds, features)
    uniform_folds: list = field(default_factory=list)

    @property
    def mean(self):
        return self.fold_importance.mean(axis=0)

    @property
    def nri(self):
        """Mean importance relative to the largest mean, in percent."""
        m = self.mean
        top = m.max()
        if top <= 0:
            return np.full_like(m, 100.0)
        return 100.0 * m / top

    def as_dict(self, values):
        return dict(zip(self.feature_names, (float(v) for v in values)))

    def to_dict(self):
        return {
            "features": list(self.feature_names),
            "rounds": [self.as_dict(row) for row in self.fold_importance],
            "mean": self.as_dict(self.mean),
            "nri": self.as_dict(self.nri),
            "uniform_folds": [k + 1 for k in self.uniform_folds],
        }

    @classmethod
    def from_fold_values(cls, values, feature_names):
        """Wrap already-computed per-fold importances (e.g. a printed table) without renormalizing."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(feature_names):
            raise ValueError("expected a (folds, features) array matching feature_names")
        return cls(list(feature_names), values)


def _fold_importance(args):
    model, X, y, k, seed, shuffles = args
    base = model.rmse(X, y)
    d = X.shape[1]
    delta = np.zeros(d)
    for j in range(d):
        acc = 0.0
        for rep in range(shuffles):
            Xp = X.copy()
            Xp[:, j] = fold_rng(seed, 0x1BB, k, j, rep).permutation(Xp[:, j])
            acc += model.rmse(Xp, y) - base
        delta[j] = max(acc / shuffles, 0.0)
    return k, delta


def permutation_importance(cv: CrossValidation, inputs, target, config: AnnConfig | None = None,
                           workers=1) -> ImportanceReport:
    """Held-out permutation importance for every fold model.

    For each feature the increase in test RMSE, averaged over
    ``config.shuffles`` seeded permutations, is floored at zero and the
    fold's values are normalized to sum to one.
    """
    config = config or AnnConfig()
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] < 2:
        raise ValueError("permutation importance needs at least two features")
    y = np.asarray(target, dtype=float).ravel()
    jobs = [(f.model, X[f.test_index], y[f.test_index], f.fold, config.seed, config.shuffles) for f in cv.folds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_fold_importance, jobs))
    else:
        raw = [_fold_importance(j) for j in jobs]
    raw.sort(key=lambda t: t[0])
    imp = np.empty((len(raw), X.shape[1]))
    uniform = []
    for row, (k, delta) in enumerate(raw):
        total = delta.sum()
        if total <= 0:
            warnings.warn(f"fold {k + 1}: permuting any feature left RMSE unchanged; "
                          "using uniform importances", stacklevel=2)
            imp[row] = 1.0 / len(delta)
            uniform.append(k)
        else:
            imp[row] = delta / total
    return ImportanceReport(list(cv.feature_names), imp, uniform)


@dataclass
class ComparisonRow:
    label: str
    sem_estimate: float
    nri: float
    sem_rank: int
    ann_rank: int
    tie: bool

    @property
    def match(self):
        return "Yes" if self.sem_rank == self.ann_rank else "No"

    def to_dict(self):
        return {"input": self.label, "sem_estimate": self.sem_estimate, "nri": self.nri,
                "sem_rank": self.sem_rank, "ann_rank": self.ann_rank, "match": self.match, "tie": self.tie}


def _ranks(scores):
    """1-based ranks, largest first; ties fall back to label order and are reported."""
    order = sorted(scores, key=lambda lab: (-scores[lab], lab))
    values = list(scores.values())
    tied = {lab for lab in scores if values.count(scores[lab]) > 1}
    return {lab: i + 1 for i, lab in enumerate(order)}, tied


def compare_sem_ann(sem_paths, nri):
    """Rank inputs by |SEM estimate| and by NRI and mark where the ranks agree."""
    sem_paths = {k: float(v) for k, v in dict(sem_paths).items()}
    nri = {k: float(v) for k, v in dict(nri).items()}
    if set(sem_paths) != set(nri):
        missing = sorted(set(sem_paths) ^ set(nri))
        raise LabelMismatchError(f"SEM and ANN label sets differ: {missing}")
    sem_rank, sem_tied = _ranks({k: abs(v) for k, v in sem_paths.items()})
    ann_rank, ann_tied = _ranks(nri)
    tied = sem_tied | ann_tied
    if tied:
        warnings.warn(f"tied scores for {sorted(tied)}; ranked in label order", stacklevel=2)
    rows = [ComparisonRow(lab, sem_paths[lab], nri[lab], sem_rank[lab], ann_rank[lab], lab in tied)
            for lab in sem_paths]
    return rows

