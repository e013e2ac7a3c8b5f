"""Vibration-event classifier toolkit: synthetic data, float and shift-add integer engines."""

from ._core import (
    CLASS_NAMES,
    ConfigError,
    DvsIoError,
    DvsValueError,
    FormatError,
    Model,
    QModel,
    ShapeError,
    agreement,
    fft,
    fiber_range,
    gen_sample,
    gen_site,
    load_dataset,
    load_model,
    load_qmodel,
    model_build,
    prepare_input,
    quantize,
    save_dataset,
    spectral_target,
    standardize,
    train,
)

__all__ = [
    "CLASS_NAMES",
    "ConfigError",
    "DvsIoError",
    "DvsValueError",
    "FormatError",
    "Model",
    "QModel",
    "ShapeError",
    "agreement",
    "fft",
    "fiber_range",
    "gen_sample",
    "gen_site",
    "load_dataset",
    "load_model",
    "load_qmodel",
    "model_build",
    "prepare_input",
    "quantize",
    "save_dataset",
    "spectral_target",
    "standardize",
    "train",
]
