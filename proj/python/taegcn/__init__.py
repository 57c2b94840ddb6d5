"""Spatio-temporal forecasting with evolving learned graphs."""

import json

from ._taegcn import (
    ConfigError,
    DimensionError,
    DivergenceError,
    Forecaster,
    ParseError,
    causal_window_mask,
    compute_metrics,
    default_model_config,
    default_train_config,
    gradcheck,
    run_cli,
    split_lengths,
    synth_generate,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "DivergenceError",
    "Forecaster",
    "ParseError",
    "causal_window_mask",
    "compute_metrics",
    "defaults",
    "gradcheck",
    "run_cli",
    "split_lengths",
    "synth_generate",
]


def defaults():
    """Default model and training configuration as dicts."""
    return {"model": json.loads(default_model_config()), "train": json.loads(default_train_config())}
