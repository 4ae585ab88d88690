"""Jointly trained sparse edge mask, variational autoencoder and GCN classifier
for connectivity matrices, built on a small numpy autodiff engine."""

__version__ = "0.1.0"

from .autodiff import Adam, Tensor, backward, no_grad
from .data import (
    DataValidationError, Dataset, FoldSplit, SiteSpec, Subject, SyntheticConfig, flatten_upper,
    generate_synthetic, load_dataset, make_folds, save_dataset, unflatten_upper,
)
from .evaluation import balanced_accuracy, network_report, occlusion_sweep, support_recovery
from .mask import SparseMask, apply_mask, binarize, elasticnet_penalty
from .training import (
    LossWeights, TrainConfig, TrainedModel, TrainingDivergence, binarize_and_evaluate,
    cross_validate, grid_search, run_variant, select_ratio, train,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam", "Tensor", "backward", "no_grad",
    "DataValidationError", "Dataset", "FoldSplit", "SiteSpec", "Subject", "SyntheticConfig",
    "flatten_upper", "unflatten_upper", "generate_synthetic", "load_dataset", "make_folds", "save_dataset",
    "balanced_accuracy", "network_report", "occlusion_sweep", "support_recovery",
    "SparseMask", "apply_mask", "binarize", "elasticnet_penalty",
    "LossWeights", "TrainConfig", "TrainedModel", "TrainingDivergence", "binarize_and_evaluate",
    "cross_validate", "grid_search", "run_variant", "select_ratio", "train",
    "load_checkpoint", "save_checkpoint",
]
