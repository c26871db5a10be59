"""Sigmoid perceptron trained by scaled conjugate gradient, with CV and importance."""
from .evaluation import (ComparisonRow, CrossValidation, FoldError, ImportanceReport, LabelMismatchError,
                         compare_sem_ann, cross_validate, fold_indices, permutation_importance)
from .network import AnnConfig, AnnConfigError, AnnModel, MinMaxScaler
from .scg import AnnTrainingError, scg, train_scg

__all__ = [
    "AnnConfig", "AnnConfigError", "AnnModel", "AnnTrainingError", "ComparisonRow", "CrossValidation",
    "FoldError", "ImportanceReport", "LabelMismatchError", "MinMaxScaler", "compare_sem_ann",
    "cross_validate", "fold_indices", "permutation_importance", "scg", "train_scg",
]
