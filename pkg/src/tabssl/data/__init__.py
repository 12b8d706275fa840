"""Dataset ingestion, preprocessing, splitting and the synthetic corpus."""

from .cache import load_table, save_table
from .split import (
    EmpiricalMarginals,
    SplitPlan,
    marginals,
    stratified_indices,
    stratified_split,
    subsample_count,
    subsample_fraction,
    validation_indices,
)
from .synthetic import synthetic_corpus
from .table import DataTable, PreprocessStats, common_features, load_csv, preprocess

__all__ = [
    "DataTable",
    "EmpiricalMarginals",
    "PreprocessStats",
    "SplitPlan",
    "common_features",
    "load_csv",
    "load_table",
    "marginals",
    "preprocess",
    "save_table",
    "stratified_indices",
    "stratified_split",
    "subsample_count",
    "subsample_fraction",
    "synthetic_corpus",
    "validation_indices",
]
