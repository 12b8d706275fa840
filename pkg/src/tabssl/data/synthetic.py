"""Desk-scale surrogate for high-dimensional, redundant expression data."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .table import DataTable


def feature_groups(n_features: int, n_groups: int) -> list[np.ndarray]:
    """Contiguous column blocks whose sizes differ by at most one.

    ``n_groups == 0`` gives every feature its own latent signal.
    """
    if n_groups == 0:
        return [np.array([j]) for j in range(n_features)]
    return np.array_split(np.arange(n_features), n_groups)


def synthetic_corpus(n_classes: int, n_features: int, n_redundant_groups: int,
                     samples_per_class: int, seed: int, *, class_sep: float = 1.0,
                     informative_fraction: float = 0.5, noise: float = 0.3) -> DataTable:
    """Class-conditional Gaussian latents copied into redundant feature groups.

    Each group owns one latent signal ``s = mu[class] + N(0, 1)``; a feature
    in the group is ``a * s + b + noise * |a| * N(0, 1)`` with a random
    loading ``a`` and offset ``b``. Only ``informative_fraction`` of the
    latents carry class means (drawn from ``N(0, class_sep^2)``); the rest
    are pure nuisance. With the default noise the expected within-group
    correlation is at least ``1 / (1 + noise^2)`` ~ 0.92.
    """
    if n_features < n_classes:
        raise ContractError("n_features must be >= n_classes")
    if not 0 <= n_redundant_groups <= n_features:
        raise ContractError("n_redundant_groups must lie in [0, n_features]")
    rng = np.random.default_rng(seed)
    groups = feature_groups(n_features, n_redundant_groups)
    n_latent = len(groups)

    n_informative = max(1, int(round(informative_fraction * n_latent)))
    means = np.zeros((n_classes, n_latent))
    informative = rng.choice(n_latent, size=n_informative, replace=False)
    means[:, informative] = rng.normal(0.0, class_sep, size=(n_classes, n_informative))

    n = n_classes * samples_per_class
    labels = rng.permutation(np.repeat(np.arange(n_classes), samples_per_class))
    latent = means[labels] + rng.normal(size=(n, n_latent))

    loading = rng.uniform(0.5, 1.5, size=n_features) * rng.choice([-1.0, 1.0], size=n_features)
    offset = rng.normal(size=n_features)
    x = np.empty((n, n_features))
    for g, cols in enumerate(groups):
        x[:, cols] = latent[:, [g]] * loading[cols] + offset[cols]
    x += noise * np.abs(loading) * rng.normal(size=(n, n_features))

    return DataTable(
        x,
        [f"g{j:05d}" for j in range(n_features)],
        labels,
        tuple(f"class_{c}" for c in range(n_classes)),
    )
