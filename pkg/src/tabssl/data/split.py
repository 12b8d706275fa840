"""Stratified partitioning, label-fraction subsampling and empirical marginals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, SplitError
from .table import DataTable


@dataclass(frozen=True)
class SplitPlan:
    pretrain_fraction: float
    finetune_fraction: float
    test_fraction: float
    validation_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if any(not 0.0 < f < 1.0 for f in (*fr, self.validation_fraction)):
            raise ContractError(f"split fractions must lie in (0, 1), got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ContractError(f"split fractions must sum to 1, got {sum(fr)}")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.pretrain_fraction, self.finetune_fraction, self.test_fraction)


def largest_remainder(total: int, weights, rng: np.random.Generator) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``weights``.

    Every share is the floor or ceiling of its exact quota. Remaining units
    go to the largest fractional parts; ties are broken by a random order.
    """
    w = np.asarray(weights, dtype=np.float64)
    quota = total * w / w.sum()
    base = np.floor(quota + 1e-9).astype(np.int64)
    left = total - int(base.sum())
    if left > 0:
        frac = quota - base
        tiebreak = rng.permutation(len(w))
        # sort by fractional part desc, then by the shuffled rank
        order = np.lexsort((tiebreak, -np.round(frac, 12)))
        base[order[:left]] += 1
    return base


def stratified_indices(labels: np.ndarray, fractions, seed: int,
                       class_names=None) -> list[np.ndarray]:
    """Split row indices into ``len(fractions)`` disjoint, class-balanced parts.

    Each class is shuffled and cut by largest-remainder allocation, so the
    per-class count in every part is within one example of proportional.
    Returned index arrays are sorted.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        if rows.size < len(fractions):
            name = class_names[c] if class_names else int(c)
            raise SplitError(
                f"class {name!r} has {rows.size} examples, need at least {len(fractions)}"
            )
        rows = rng.permutation(rows)
        counts = largest_remainder(rows.size, fractions, rng)
        for k, chunk in enumerate(np.split(rows, np.cumsum(counts)[:-1])):
            parts[k].append(chunk)
    return [np.sort(np.concatenate(p)) for p in parts]


def stratified_split(table: DataTable, plan: SplitPlan):
    """Return ``(pretrain, finetune, test)`` tables with class proportions preserved."""
    if table.labels is None:
        raise SplitError("stratified split needs labels")
    idx = stratified_indices(table.labels, plan.fractions, plan.seed, table.class_names)
    return tuple(table.take(i) for i in idx)


def validation_indices(table: DataTable, fraction: float, seed: int):
    """Indices ``(train, validation)`` holding out ``fraction`` of the rows.

    Stratified when labels are present, otherwise a plain shuffle.
    """
    if table.labels is None:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(table.n_rows)
        n_val = int(round(fraction * table.n_rows))
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c in np.unique(table.labels):
        rows = rng.permutation(np.flatnonzero(table.labels == c))
        n_tr, _ = largest_remainder(rows.size, [1.0 - fraction, fraction], rng)
        train.append(rows[:n_tr])
        val.append(rows[n_tr:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def subsample_count(p: float, n: int) -> int:
    """``ceil(p * n)``, guarded against float noise such as ``0.07 * 100``."""
    return math.ceil(p * n - 1e-9)


def subsample_fraction(table: DataTable, p: float, seed: int, stratified: bool = True,
                       reference_size: int | None = None) -> DataTable:
    """Keep ``ceil(p * reference_size)`` rows (capped at the table size).

    ``reference_size`` defaults to the table's own row count. The label
    sweep passes the size of the whole fine-tuning partition while sampling
    from its non-validation rows. Kept rows stay in their original order.
    """
    if not 0.0 < p <= 1.0:
        raise ContractError(f"p must lie in (0, 1], got {p}")
    ref = table.n_rows if reference_size is None else reference_size
    n = min(subsample_count(p, ref), table.n_rows)
    rng = np.random.default_rng(seed)
    if not stratified:
        return table.take(np.sort(rng.choice(table.n_rows, size=n, replace=False)))
    if table.labels is None:
        raise SplitError("stratified subsampling needs labels")
    classes, counts = np.unique(table.labels, return_counts=True)
    if n < classes.size:
        raise SplitError(
            f"p={p} keeps {n} rows, fewer than the {classes.size} classes present"
        )
    alloc = largest_remainder(n, counts, rng)
    keep = []
    for c, k in zip(classes, alloc):
        rows = np.flatnonzero(table.labels == c)
        keep.append(rng.choice(rows, size=k, replace=False))
    return table.take(np.sort(np.concatenate(keep)))


class EmpiricalMarginals:
    """Per-feature value pools; pool ``j`` is column ``j`` as a multiset."""

    def __init__(self, pools: np.ndarray):
        pools = np.array(pools, dtype=np.float64)
        if pools.ndim != 2 or pools.shape[0] < 1:
            raise ContractError("marginal pools need at least one row")
        pools.setflags(write=False)
        self.pools = pools

    @property
    def n_features(self) -> int:
        return self.pools.shape[1]

    def pool(self, j: int) -> np.ndarray:
        return self.pools[:, j]

    def sample(self, n_rows: int, rng: np.random.Generator) -> np.ndarray:
        """``n_rows x d`` matrix; entry ``(i, j)`` is a uniform draw (with replacement) from pool ``j``."""
        n, d = self.pools.shape
        idx = rng.integers(0, n, size=(n_rows, d))
        return self.pools[idx, np.arange(d)]


def marginals(table: DataTable) -> EmpiricalMarginals:
    return EmpiricalMarginals(table.features)
