from .logistic import (
    SeverityModel,
    Standardizer,
    fit_logistic,
    fit_standardizer,
    score,
    train_severity_model,
)
from .tree import TreeModel, fit_tree
from .validation import (
    ConfusionMatrix,
    CVResult,
    LogisticFitter,
    TreeFitter,
    confusion,
    leave_two_out_cv,
)

__all__ = [
    "SeverityModel", "Standardizer", "fit_logistic", "fit_standardizer", "score",
    "train_severity_model", "TreeModel", "fit_tree", "ConfusionMatrix", "CVResult",
    "LogisticFitter", "TreeFitter", "confusion", "leave_two_out_cv",
]
