"""Traffic-signal attack detection with a CNN and post-hoc explanations."""

from ._core import (
    Config,
    Model,
    Prepared,
    RecordLog,
    cli,
    evaluate,
    kernel_shap,
    lime,
    load_config,
    make_model,
    occlusion,
    parse_config,
    pca,
    prepare,
    simulate,
    train,
)

__all__ = [
    "Config",
    "Model",
    "Prepared",
    "RecordLog",
    "cli",
    "evaluate",
    "kernel_shap",
    "lime",
    "load_config",
    "make_model",
    "occlusion",
    "parse_config",
    "pca",
    "prepare",
    "simulate",
    "train",
]
