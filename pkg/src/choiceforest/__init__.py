"""choiceforest: discrete choice model estimation with random forests."""

from ._kernels import BACKEND as backend_name
from .core import (Assortment, ChoiceDistribution, ChoiceModel, Dataset,
                   DimensionMismatchError, Transaction, all_assortments,
                   phi_continuity, symmetric_distance, validate_distribution)
from .cart import TreeNode, TreeParams, best_split, gini_index, grow_tree, tree_predict
from .forest import Forest, ForestParams, fit, mdi, predict_normalized, predict_raw
from .evaluation import (ExperimentConfig, kfold_cv, rmse_empirical, rmse_soft,
                         run_experiment)

__all__ = [
    "backend_name",
    "Assortment", "ChoiceDistribution", "ChoiceModel", "Dataset",
    "DimensionMismatchError", "Transaction", "all_assortments",
    "phi_continuity", "symmetric_distance", "validate_distribution",
    "TreeNode", "TreeParams", "best_split", "gini_index", "grow_tree",
    "tree_predict",
    "Forest", "ForestParams", "fit", "mdi", "predict_normalized", "predict_raw",
    "ExperimentConfig", "kfold_cv", "rmse_empirical", "rmse_soft",
    "run_experiment",
]
