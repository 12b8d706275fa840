"""SCARF (contrastive), VIME (generative) and BYOL (bootstrap) pretraining."""

from .losses import (
    byol_loss,
    byol_loss_with_grad,
    ema_update,
    info_nce,
    info_nce_with_grad,
    vime_losses,
    vime_losses_with_grad,
)
from .models import ByolModel, ScarfModel, VimeModel, byol_step, scarf_step, vime_step
from .train import (
    METHODS,
    PretrainConfig,
    PretrainReport,
    build_model,
    extract_encoder,
    fit_pretext,
    pretrain,
)

__all__ = [
    "METHODS",
    "ByolModel",
    "PretrainConfig",
    "PretrainReport",
    "ScarfModel",
    "VimeModel",
    "build_model",
    "byol_loss",
    "byol_loss_with_grad",
    "byol_step",
    "ema_update",
    "extract_encoder",
    "fit_pretext",
    "info_nce",
    "info_nce_with_grad",
    "pretrain",
    "scarf_step",
    "vime_losses",
    "vime_losses_with_grad",
    "vime_step",
]
