"""Pairwise preference learning: solver, validation and model comparison."""

from .svm import Kernel, SvmHyperparams, SvmModel, predict_order, train_svm
from .validation import EvalReport, cross_validate, grid_search, model_comparison

__all__ = [
    "EvalReport", "Kernel", "SvmHyperparams", "SvmModel", "cross_validate", "grid_search",
    "model_comparison", "predict_order", "train_svm",
]
