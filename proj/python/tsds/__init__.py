"""Task-specific data selection: transport-based candidate weighting.

Thin re-export of the compiled core. All heavy lifting happens in C++;
inputs are numpy arrays (rows = examples).
"""

from ._core import (
    alignment_metric,
    effective_support,
    kde_full,
    knn,
    sample,
    select,
)

__all__ = [
    "alignment_metric",
    "effective_support",
    "kde_full",
    "knn",
    "sample",
    "select",
]
