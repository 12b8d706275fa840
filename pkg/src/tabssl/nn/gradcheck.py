"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError

LossFn = Callable[[dict], tuple[float, dict]]


def grad_check(loss_fn: LossFn, params: dict[str, np.ndarray], h: float = 1e-5,
               n_coords: int = 200, seed: int = 0, abs_floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(loss, grads)`` and be deterministic.
    Up to ``n_coords`` coordinates are sampled (all of them when fewer exist);
    each is perturbed in place and restored. The relative error of one
    coordinate is ``|a - n| / max(|a|, |n|, abs_floor)``; the floor keeps
    round-off on exactly-zero gradients from dominating.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericError(f"loss is not finite at the check point: {loss}")
    grads = {k: np.array(v, dtype=np.float64, copy=True) for k, v in grads.items()}

    coords = [(name, i) for name, arr in params.items() for i in range(arr.size)]
    if len(coords) > n_coords:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[j] for j in sorted(pick)]

    worst = 0.0
    for name, i in coords:
        flat = params[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn(params)[0]
        flat[i] = orig - h
        down = loss_fn(params)[0]
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"loss became non-finite while perturbing {name}[{i}]")
        numeric = (up - down) / (2.0 * h)
        analytic = grads[name].reshape(-1)[i] if name in grads else 0.0
        denom = max(abs(analytic), abs(numeric), abs_floor)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
