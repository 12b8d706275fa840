"""Corruption generators for the pretext views.

Both generators only ever copy values out of the empirical marginal pools,
and leave every unselected position bit-identical to the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data.split import EmpiricalMarginals
from .errors import ContractError, DimensionError


@dataclass(frozen=True)
class CorruptionConfig:
    fraction: float = 0.3
    mask_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("fraction", "mask_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"corruption {name} must lie in [0, 1], got {v}")


def batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    """Independent stream for one batch: ``SeedSequence([seed, batch_index])``."""
    return np.random.default_rng([seed, batch_index])


def replacement_count(c: float, d: int) -> int:
    """Features replaced per row by SCARF: ``c * d`` rounded half up."""
    return int(math.floor(c * d + 0.5))


def _check(batch, marginals):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != marginals.n_features:
        raise DimensionError(
            f"batch shape {batch.shape} does not match {marginals.n_features} marginal pools"
        )
    return batch


def scarf_mask(n: int, d: int, c: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean ``n x d`` mask with exactly ``replacement_count(c, d)`` true entries per row.

    Each row picks its own subset uniformly without replacement.
    """
    k = replacement_count(c, d)
    mask = np.zeros((n, d), dtype=bool)
    if k:
        chosen = np.argsort(rng.random((n, d)), axis=1)[:, :k]
        np.put_along_axis(mask, chosen, True, axis=1)
    return mask


def scarf_corrupt(batch, marginals: EmpiricalMarginals, c: float, rng: np.random.Generator,
                  return_mask: bool = False):
    """Replace a random ``c`` share of each row's features with marginal draws."""
    x = _check(batch, marginals)
    mask = scarf_mask(*x.shape, c, rng)
    out = np.where(mask, marginals.sample(x.shape[0], rng), x)
    return (out, mask) if return_mask else out


def vime_corrupt(batch, marginals: EmpiricalMarginals, p_m: float, rng: np.random.Generator):
    """Mask-and-resample: ``x~ = m * x_bar + (1 - m) * x`` with ``m ~ Bernoulli(p_m)``.

    Returns ``(corrupted, mask)`` where ``mask`` is a 0/1 float matrix.
    """
    x = _check(batch, marginals)
    mask = rng.random(x.shape) < p_m
    out = np.where(mask, marginals.sample(x.shape[0], rng), x)
    return out, mask.astype(np.float64)
