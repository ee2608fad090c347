"""Traffic-flow forecasting on a self-contained autodiff engine."""

from .config import ModelConfig, RunConfig, TrainConfig
from .data import NormStats, SeriesDataset, load_dataset, prepare
from .metrics import MetricsReport, compute_metrics
from .model import Forecaster
from .tensor import Tensor
from .training import evaluate, persistence_metrics, train

__version__ = "0.1.0"

__all__ = [
    "Forecaster",
    "MetricsReport",
    "ModelConfig",
    "NormStats",
    "RunConfig",
    "SeriesDataset",
    "Tensor",
    "TrainConfig",
    "compute_metrics",
    "evaluate",
    "load_dataset",
    "persistence_metrics",
    "prepare",
    "train",
    "__version__",
]
