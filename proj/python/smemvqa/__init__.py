"""Spatial memory network VQA: synthetic datasets, training, and attention-traced inference."""

from ._core import (
    Predictor,
    SmemError,
    build_id,
    consensus,
    evaluate,
    extract_grid_features,
    generate_dataset,
    position_heuristic,
    train,
)

__all__ = [
    "Predictor",
    "SmemError",
    "build_id",
    "consensus",
    "evaluate",
    "extract_grid_features",
    "generate_dataset",
    "position_heuristic",
    "train",
]
