"""Cause-effect information bottleneck: generators, training, estimation."""

from ._ceib import (
    ConfigError,
    Dataset,
    Estimator,
    ModelConfig,
    NumericalError,
    TrainConfig,
    baseline_ace,
    generate_linear_gaussian,
    generate_twins,
    impute_x2_train_mean,
    load_ihdp,
    mask_x2,
    run_experiment,
    split_dataset,
    train_estimator,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "Estimator",
    "ModelConfig",
    "NumericalError",
    "TrainConfig",
    "baseline_ace",
    "generate_linear_gaussian",
    "generate_twins",
    "impute_x2_train_mean",
    "load_ihdp",
    "mask_x2",
    "run_experiment",
    "split_dataset",
    "train_estimator",
]
