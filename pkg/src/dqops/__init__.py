"""Data-quality-driven MLOps toolkit.

Four pipeline stages built around the link between data quality and model
quality: prioritized cleaning of incomplete training data, feasibility
estimation via nearest-neighbor error bounds, statistically budgeted
continuous integration, and label-efficient online model selection.
"""

from dqops.core import (
    DataError,
    DqopsError,
    LabeledDataset,
    LabelSpace,
    PredictionMatrix,
    load_dataset,
    save_dataset,
    zero_one_loss,
)
from dqops.knn import KnnConfig, holdout_error, knn_predict

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DqopsError",
    "KnnConfig",
    "LabelSpace",
    "LabeledDataset",
    "PredictionMatrix",
    "holdout_error",
    "knn_predict",
    "load_dataset",
    "save_dataset",
    "zero_one_loss",
    "__version__",
]
