"""Social recommendation with layered trust-graph diffusion."""

from ._core import (
    Dataset,
    DataSplit,
    DiffnetError,
    Model,
    evaluate,
    load_dataset,
    load_model,
    make_model,
    recommend,
    save_dataset,
    split,
    synthesize,
    train,
)

__all__ = [
    "Dataset",
    "DataSplit",
    "DiffnetError",
    "Model",
    "evaluate",
    "load_dataset",
    "load_model",
    "make_model",
    "recommend",
    "save_dataset",
    "split",
    "synthesize",
    "train",
]
