"""Deep encoders trained for large-margin kNN classification."""

from ._core import (
    CapacityError,
    ConfigError,
    ConsistencyError,
    DivergenceError,
    Encoder,
    Error,
    FormatError,
    IoError,
    build_triples,
    energy_predict,
    knn_predict,
    load_csv,
    load_idx,
    margin_loss,
    set_num_threads,
    train,
)

__all__ = [
    "CapacityError",
    "ConfigError",
    "ConsistencyError",
    "DivergenceError",
    "Encoder",
    "Error",
    "FormatError",
    "IoError",
    "build_triples",
    "energy_predict",
    "knn_predict",
    "load_csv",
    "load_idx",
    "margin_loss",
    "set_num_threads",
    "train",
]
