"""Minimal deterministic MLP engine with hand-derived gradients."""

from .checkpoint import load as load_checkpoint, network_checksum, save as save_checkpoint
from .gradcheck import grad_check
from .layers import dense_forward
from .mlp import (
    ForwardCache,
    MlpSpec,
    Network,
    ParamStore,
    init_params,
    mlp_backward,
    mlp_forward,
    prefixed,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "ForwardCache",
    "MlpSpec",
    "Network",
    "ParamStore",
    "adam_step",
    "dense_forward",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "mlp_backward",
    "mlp_forward",
    "network_checksum",
    "prefixed",
    "save_checkpoint",
]
