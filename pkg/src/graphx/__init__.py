"""Hypernetwork-generated GNN encoders/decoders for cross-mode graph prediction."""

from .data import (
    Dataset,
    IngestConfig,
    SyntheticConfig,
    SyntheticMode,
    bundled_dataset_path,
    gen_synthetic,
    ingest_csv,
    load_dataset,
    save_dataset,
)
from .errors import (
    ConfigError,
    DegenerateRowError,
    DivergenceError,
    GraphxError,
    ShapeError,
    ValidationError,
)
from .graphs import Episode, ModeGraph, ModeSpec
from .metrics import MetricReport, auc_metric, build_metric_report, mse_metric, pcc_metric
from .pipeline import (
    Model,
    ModelConfig,
    TrainResult,
    config_hash,
    evaluate,
    forward_episode,
    generalize,
    load_checkpoint,
    save_checkpoint,
    train,
    train_model,
    trainable_param_count,
)
from .tensor import Adam, Tensor, astensor, grad_check

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ConfigError",
    "Dataset",
    "DegenerateRowError",
    "DivergenceError",
    "Episode",
    "GraphxError",
    "IngestConfig",
    "MetricReport",
    "Model",
    "ModelConfig",
    "ModeGraph",
    "ModeSpec",
    "ShapeError",
    "SyntheticConfig",
    "SyntheticMode",
    "Tensor",
    "TrainResult",
    "ValidationError",
    "astensor",
    "auc_metric",
    "build_metric_report",
    "bundled_dataset_path",
    "config_hash",
    "evaluate",
    "forward_episode",
    "gen_synthetic",
    "generalize",
    "grad_check",
    "ingest_csv",
    "load_checkpoint",
    "load_dataset",
    "mse_metric",
    "pcc_metric",
    "save_checkpoint",
    "save_dataset",
    "train",
    "train_model",
    "trainable_param_count",
    "__version__",
]
