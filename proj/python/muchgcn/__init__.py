"""Multi-channel hierarchical graph classification engine.

Thin Python surface over the C++ core: build or load graph datasets, train
models with stratified cross-validation, run single-graph inference, and call
the verification suite (gradient check, independent forward reference, filter
separation, scaling benchmark).
"""

from ._core import (
    Dataset,
    Model,
    cross_validate,
    filter_separation,
    gradient_check,
    load_tu_dataset,
    plan,
    reference_gap,
    scaling_benchmark,
    synthetic_dataset,
)

__all__ = [
    "Dataset",
    "Model",
    "cross_validate",
    "filter_separation",
    "gradient_check",
    "load_tu_dataset",
    "plan",
    "reference_gap",
    "scaling_benchmark",
    "synthetic_dataset",
]

__version__ = "0.1.0"
