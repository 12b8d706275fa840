"""Accuracy curves, the AUPC gain metric and the embedding collapse spectrum."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, DimensionError

GRID_DECIMALS = 10
DEFAULT_RANGE = (0.02, 0.3)
RANGE_TOL = 1e-9


def parse_grid(text: str) -> tuple[float, ...]:
    """Parse ``lo:hi:step`` (inclusive of ``hi``) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ConfigError("empty proportion grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must look like lo:hi:step, got {text!r}")
        try:
            lo, hi, step = (float(s) for s in parts)
        except ValueError as exc:
            raise ConfigError(f"bad grid {text!r}: {exc}") from None
        if step <= 0 or hi < lo:
            raise ConfigError(f"grid {text!r} is empty")
        n = int(math.floor((hi - lo) / step + 1e-9))
        values = [round(lo + i * step, GRID_DECIMALS) for i in range(n + 1)]
    else:
        try:
            values = [float(s) for s in text.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad grid {text!r}: {exc}") from None
    if not values:
        raise ConfigError(f"grid {text!r} is empty")
    return tuple(values)


def pretrain_fraction_grid() -> tuple[float, ...]:
    """0.01..0.05 by 0.01, then 0.05..1 by 0.05, with the shared 0.05 kept once."""
    fine = parse_grid("0.01:0.05:0.01")
    coarse = parse_grid("0.05:1:0.05")
    return tuple(sorted(set(fine) | set(coarse)))


@dataclass(frozen=True)
class SweepGrid:
    proportions: tuple[float, ...]
    seeds_per_point: int = 5

    def __post_init__(self):
        props = tuple(float(p) for p in self.proportions)
        object.__setattr__(self, "proportions", props)
        if not props:
            raise ConfigError("proportion grid is empty")
        if any(not 0.0 < p <= 1.0 for p in props):
            raise ConfigError(f"proportions must lie in (0, 1], got {props}")
        if any(b <= a for a, b in zip(props, props[1:])):
            raise ConfigError("proportions must be strictly increasing")
        if self.seeds_per_point < 1:
            raise ConfigError("seeds_per_point must be >= 1")

    @classmethod
    def parse(cls, text: str, seeds_per_point: int = 5) -> "SweepGrid":
        return cls(parse_grid(text), seeds_per_point)


@dataclass
class AccuracyCurve:
    """Per-proportion test accuracies of one method; ``None`` marks a failed cell."""

    method: str
    proportions: tuple[float, ...]
    accuracies: list[list[float | None]]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.proportions = tuple(self.proportions)
        if len(self.accuracies) != len(self.proportions):
            raise DimensionError("one accuracy list per proportion is required")
        for accs in self.accuracies:
            for a in accs:
                if a is not None and not 0.0 <= a <= 1.0:
                    raise ContractError(f"accuracy {a} outside [0, 1]")

    @classmethod
    def from_means(cls, method: str, proportions, means) -> "AccuracyCurve":
        return cls(method, tuple(proportions), [[float(m)] for m in means])

    def _present(self, i: int) -> np.ndarray:
        return np.array([a for a in self.accuracies[i] if a is not None], dtype=np.float64)

    @property
    def means(self) -> np.ndarray:
        return np.array([v.mean() if v.size else np.nan
                         for v in map(self._present, range(len(self.proportions)))])

    @property
    def stds(self) -> np.ndarray:
        return np.array([v.std() if v.size else np.nan
                         for v in map(self._present, range(len(self.proportions)))])

    @property
    def missing(self) -> int:
        return sum(a is None for accs in self.accuracies for a in accs)

    def at(self, p: float) -> list[float | None]:
        for q, accs in zip(self.proportions, self.accuracies):
            if abs(q - p) <= RANGE_TOL:
                return accs
        raise KeyError(p)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "proportions": list(self.proportions),
            "accuracies": self.accuracies,
            "mean": [None if np.isnan(m) else float(m) for m in self.means],
            "std": [None if np.isnan(s) else float(s) for s in self.stds],
            "config": self.config,
        }


def _curve_points(curve) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(curve, AccuracyCurve):
        return np.asarray(curve.proportions, dtype=np.float64), curve.means
    ps, means = curve
    return np.asarray(ps, dtype=np.float64), np.asarray(means, dtype=np.float64)


def aupc(curve, lo: float = DEFAULT_RANGE[0], hi: float = DEFAULT_RANGE[1]) -> float:
    """Trapezoidal area under mean accuracy vs proportion, over points in ``[lo, hi]``.

    ``curve`` is an :class:`AccuracyCurve` or a ``(proportions, means)`` pair.
    """
    ps, means = _curve_points(curve)
    inside = (ps >= lo - RANGE_TOL) & (ps <= hi + RANGE_TOL)
    if inside.sum() < 2:
        raise ContractError(f"AUPC needs at least 2 grid points in [{lo}, {hi}], got {int(inside.sum())}")
    x, y = ps[inside], means[inside]
    if np.isnan(y).any():
        raise ContractError("a proportion in the AUPC range has no successful cell")
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) * 0.5))


def gain(m1, m2, lo: float = DEFAULT_RANGE[0], hi: float = DEFAULT_RANGE[1]) -> float:
    """``aupc(m1) - aupc(m2)``; positive when ``m1`` is better on average."""
    p1, _ = _curve_points(m1)
    p2, _ = _curve_points(m2)
    if p1.shape != p2.shape or np.any(np.abs(p1 - p2) > RANGE_TOL):
        raise ContractError("gain needs both curves on the same proportion grid")
    return aupc(m1, lo, hi) - aupc(m2, lo, hi)


def data_savings(curve: AccuracyCurve, baseline: AccuracyCurve) -> dict:
    """First proportion at which ``curve`` reaches the baseline's best mean accuracy.

    ``saving`` is the share of labels spared relative to the proportion where
    the baseline peaks; it is ``None`` when the curve never gets there.
    """
    b_means = baseline.means
    target = float(np.nanmax(b_means))
    p_base = baseline.proportions[int(np.nanargmax(b_means))]
    reached = [p for p, m in zip(curve.proportions, curve.means) if m >= target]
    p_reach = reached[0] if reached else None
    saving = None if p_reach is None else 1.0 - p_reach / p_base
    return {"method": curve.method, "baseline_best": target, "baseline_best_p": p_base,
            "first_p": p_reach, "saving": saving}


def embedding_covariance(z) -> np.ndarray:
    """``(1/N) sum (z_i - mean)(z_i - mean)^T``, symmetrized against round-off."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise DimensionError(f"embeddings must be a matrix, got shape {z.shape}")
    if z.shape[0] < 2:
        raise ContractError("covariance needs at least 2 embeddings")
    centered = z - z.mean(axis=0)
    c = centered.T @ centered / z.shape[0]
    return 0.5 * (c + c.T)


@dataclass
class CollapseReport:
    singular_values: np.ndarray
    tolerance: float
    collapsed_count: int

    @property
    def dim(self) -> int:
        return self.singular_values.size

    @property
    def log_spectrum(self) -> np.ndarray:
        """``log10`` of the spectrum; exact zeros map to ``-inf``."""
        with np.errstate(divide="ignore"):
            return np.log10(self.singular_values)

    @property
    def collapsed_ratio(self) -> float:
        return self.collapsed_count / self.dim

    def rows(self):
        """``(k, sigma_k)`` pairs with 1-based ``k``."""
        return [(k + 1, float(s)) for k, s in enumerate(self.singular_values)]

    def to_json(self) -> dict:
        return {"dim": self.dim, "tolerance": self.tolerance,
                "collapsed_count": self.collapsed_count,
                "singular_values": [float(s) for s in self.singular_values]}


def singular_spectrum(c, rel_tol: float = 1e-6, abs_floor: float = 1e-12,
                      sym_tol: float = 1e-8) -> CollapseReport:
    """Descending singular values of a covariance matrix and the count below tolerance.

    The tolerance is ``max(rel_tol * sigma_1, abs_floor)``.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {c.shape}")
    scale = max(float(np.abs(c).max(initial=0.0)), 1.0)
    if np.abs(c - c.T).max(initial=0.0) > sym_tol * scale:
        raise ContractError("covariance matrix is not symmetric")
    sigma = np.linalg.svd(c, compute_uv=False)
    sigma = np.sort(sigma)[::-1]
    tol = max(rel_tol * float(sigma[0]) if sigma.size else 0.0, abs_floor)
    return CollapseReport(sigma, tol, int(np.sum(sigma < tol)))


def collapse_report(z, rel_tol: float = 1e-6) -> CollapseReport:
    return singular_spectrum(embedding_covariance(z), rel_tol)
