"""Pretext-task losses with their analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError, NumericError
from ..nn.mlp import ParamStore

VARIANTS = ("standard_infonce", "as_printed")
BCE_CLAMP = 1e-7


def _unit_rows(q: np.ndarray, what: str):
    norms = np.linalg.norm(q, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise NumericError(f"{what} row {int(zero[0])} has zero norm")
    return q / norms[:, None], norms


def _unit_rows_backward(u, norms, du):
    """Gradient through ``u = q / |q|``."""
    return (du - u * (u * du).sum(axis=1, keepdims=True)) / norms[:, None]


def info_nce_with_grad(q, q_tilde, tau: float = 1.0, variant: str = "standard_infonce"):
    """InfoNCE over cosine similarities ``s[i, j] = cos(q_i, q~_j)``.

    Row ``i`` contributes ``-log(exp(s_ii / tau) / sum_k exp(s_ik / tau))``.
    ``standard_infonce`` sums ``k`` over the whole batch; ``as_printed``
    leaves out ``k = i``, so the positive pair is absent from the
    denominator and the loss can go negative.

    Returns ``(loss, dq, dq_tilde)``.
    """
    q = np.asarray(q, dtype=np.float64)
    q_tilde = np.asarray(q_tilde, dtype=np.float64)
    if q.shape != q_tilde.shape or q.ndim != 2:
        raise DimensionError(f"projection shapes differ: {q.shape} vs {q_tilde.shape}")
    n = q.shape[0]
    if n < 2:
        raise ContractError("InfoNCE needs a batch of at least 2 examples")
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    if variant not in VARIANTS:
        raise ContractError(f"unknown InfoNCE variant {variant!r}")

    u, nu = _unit_rows(q, "q")
    v, nv = _unit_rows(q_tilde, "q_tilde")
    logits = (u @ v.T) / tau
    masked = logits.copy()
    if variant == "as_printed":
        np.fill_diagonal(masked, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - top)
    denom = e.sum(axis=1, keepdims=True)
    loss = float(np.mean(top[:, 0] + np.log(denom[:, 0]) - np.diag(logits)))

    dlogits = e / denom
    dlogits[np.diag_indices(n)] -= 1.0
    ds = dlogits / (n * tau)
    dq = _unit_rows_backward(u, nu, ds @ v)
    dq_tilde = _unit_rows_backward(v, nv, ds.T @ u)
    return loss, dq, dq_tilde


def info_nce(q, q_tilde, tau: float = 1.0, variant: str = "standard_infonce") -> float:
    return info_nce_with_grad(q, q_tilde, tau, variant)[0]


def vime_losses_with_grad(x, mask, feat_pred, mask_pred, alpha: float = 1.0,
                          masked_only: bool = False):
    """Mask BCE plus ``alpha`` times feature MSE.

    ``mask_pred`` holds probabilities; they are clamped to
    ``[1e-7, 1 - 1e-7]`` before the log, and the clamp has zero gradient
    outside that band. With ``masked_only`` the MSE averages over masked
    positions only (0 when nothing is masked).

    Returns ``((L_m, L_f, L), d_feat_pred, d_mask_pred)``.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in (x, mask, feat_pred, mask_pred)]
    x, mask, feat_pred, mask_pred = arrays
    if any(a.shape != x.shape for a in arrays):
        raise DimensionError(f"VIME loss inputs differ in shape: {[a.shape for a in arrays]}")
    count = x.size

    p = np.clip(mask_pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    l_m = float(-np.mean(mask * np.log(p) + (1.0 - mask) * np.log1p(-p)))
    inside = (mask_pred >= BCE_CLAMP) & (mask_pred <= 1.0 - BCE_CLAMP)
    d_mask = np.where(inside, (-mask / p + (1.0 - mask) / (1.0 - p)) / count, 0.0)

    diff = feat_pred - x
    if masked_only:
        weight = mask
        denom = max(float(mask.sum()), 1.0)
    else:
        weight = 1.0
        denom = float(count)
    l_f = float(np.sum(weight * diff * diff) / denom)
    d_feat = alpha * 2.0 * weight * diff / denom
    return (l_m, l_f, l_m + alpha * l_f), d_feat, d_mask


def vime_losses(x, mask, feat_pred, mask_pred, alpha: float = 1.0, masked_only: bool = False):
    """Return ``(L_m, L_f, L)`` with ``L = L_m + alpha * L_f``."""
    return vime_losses_with_grad(x, mask, feat_pred, mask_pred, alpha, masked_only)[0]


def byol_loss_with_grad(prediction, target_proj):
    """Mean of ``2 - 2 cos(p_i, t_i)``; gradient flows into ``prediction`` only.

    Evaluated as the squared distance of the unit-normalized rows, which
    keeps every row inside ``[0, 4]`` under round-off.
    """
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target_proj, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 2:
        raise DimensionError(f"prediction/target shapes differ: {p.shape} vs {t.shape}")
    u, nu = _unit_rows(p, "prediction")
    v, _ = _unit_rows(t, "target")
    n = p.shape[0]
    diff = u - v
    loss = float(np.mean(np.minimum((diff * diff).sum(axis=1), 4.0)))
    dp = _unit_rows_backward(u, nu, 2.0 * diff / n)
    return loss, dp


def byol_loss(prediction, target_proj) -> float:
    return byol_loss_with_grad(prediction, target_proj)[0]


def ema_update(online: ParamStore, target: ParamStore, decay: float) -> ParamStore:
    """``target <- decay * target + (1 - decay) * online`` over trainable arrays, in place.

    Batch-norm running statistics are left to the target's own forward passes.
    """
    if not 0.0 <= decay <= 1.0:
        raise ContractError(f"EMA decay must lie in [0, 1], got {decay}")
    src = online.trainable()
    for name, t in target.trainable().items():
        o = src.get(name)
        if o is None or o.shape != t.shape:
            raise DimensionError(f"EMA shape mismatch for {name!r}")
        if decay == 1.0:
            continue
        if decay == 0.0:
            t[...] = o
        else:
            t *= decay
            t += (1.0 - decay) * o
    return target
