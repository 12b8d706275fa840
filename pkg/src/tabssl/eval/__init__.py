"""Accuracy curves, AUPC gains, collapse spectra and the sweep drivers."""

from .metrics import (
    AccuracyCurve,
    CollapseReport,
    SweepGrid,
    aupc,
    collapse_report,
    data_savings,
    embedding_covariance,
    gain,
    parse_grid,
    pretrain_fraction_grid,
    singular_spectrum,
)
from .sweeps import (
    BASELINE,
    ArchitectureResult,
    Cell,
    CellResult,
    FreshEncoder,
    PretrainedEncoder,
    SizeSweepResult,
    SweepResult,
    architecture_sweep,
    pretrain_size_sweep,
    proportion_sweep,
    results_csv,
    run_seed,
    spectrum_csv,
)

__all__ = [
    "BASELINE",
    "AccuracyCurve",
    "ArchitectureResult",
    "Cell",
    "CellResult",
    "CollapseReport",
    "FreshEncoder",
    "PretrainedEncoder",
    "SizeSweepResult",
    "SweepGrid",
    "SweepResult",
    "architecture_sweep",
    "aupc",
    "collapse_report",
    "data_savings",
    "embedding_covariance",
    "gain",
    "parse_grid",
    "pretrain_fraction_grid",
    "pretrain_size_sweep",
    "proportion_sweep",
    "results_csv",
    "run_seed",
    "singular_spectrum",
    "spectrum_csv",
]
