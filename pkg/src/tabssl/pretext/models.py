"""SCARF, VIME and BYOL model bundles and their single training steps.

Each model keeps its sub-networks as :class:`~tabssl.nn.Network` objects and
exposes ``trainables()`` (the flat name -> array dict handed to Adam) and
``loss_and_grads(...)`` for fixed, already-corrupted views, which is what
gradient checks perturb.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..augment import scarf_corrupt, vime_corrupt
from ..errors import ContractError
from ..nn import AdamState, MlpSpec, Network, adam_step, prefixed
from ..nn.layers import sigmoid
from .losses import byol_loss_with_grad, ema_update, info_nce_with_grad, vime_losses_with_grad


def _add(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k] + v if k in out else v
    return out


@dataclass
class ScarfModel:
    encoder: Network
    projector: Network
    tau: float = 1.0
    variant: str = "standard_infonce"

    @classmethod
    def create(cls, encoder_spec: MlpSpec, seed, proj_hidden: int = 256, proj_dim: int = 256,
               tau: float = 1.0, variant: str = "standard_infonce") -> "ScarfModel":
        rng = np.random.default_rng(seed)
        proj = MlpSpec(encoder_spec.out_dim, (proj_hidden,), use_batchnorm=False,
                       output_dim=proj_dim)
        return cls(Network.create(encoder_spec, rng), Network.create(proj, rng), tau, variant)

    def trainables(self) -> dict:
        return {**prefixed("encoder", self.encoder.params.trainable()),
                **prefixed("projector", self.projector.params.trainable())}

    def loss_and_grads(self, x, x_tilde):
        z, cz = self.encoder.forward(x)
        zt, czt = self.encoder.forward(x_tilde)
        q, cq = self.projector.forward(z)
        qt, cqt = self.projector.forward(zt)
        loss, dq, dqt = info_nce_with_grad(q, qt, self.tau, self.variant)
        gp1, dz = self.projector.backward(cq, dq)
        gp2, dzt = self.projector.backward(cqt, dqt)
        ge1, _ = self.encoder.backward(cz, dz)
        ge2, _ = self.encoder.backward(czt, dzt)
        grads = {**prefixed("encoder", _add(ge1, ge2)), **prefixed("projector", _add(gp1, gp2))}
        return loss, grads


def scarf_step(model: ScarfModel, batch, marginals, c: float, rng, opt: AdamState) -> float:
    """One Adam step on InfoNCE between ``x`` and its SCARF corruption; returns the batch loss."""
    if len(batch) < 2:
        raise ContractError("a SCARF step needs a batch of at least 2 examples")
    x_tilde = scarf_corrupt(batch, marginals, c, rng)
    loss, grads = model.loss_and_grads(batch, x_tilde)
    adam_step(model.trainables(), grads, opt)
    return loss


@dataclass
class VimeModel:
    """Encoder with a feature decoder and a sigmoid mask decoder.

    Both decoders reuse the encoder's hidden widths and read out ``d`` values.
    """

    encoder: Network
    feature_decoder: Network
    mask_decoder: Network
    alpha: float = 1.0
    masked_only_mse: bool = False

    @classmethod
    def create(cls, encoder_spec: MlpSpec, seed, alpha: float = 1.0,
               masked_only_mse: bool = False) -> "VimeModel":
        rng = np.random.default_rng(seed)
        dec = MlpSpec(encoder_spec.out_dim, encoder_spec.hidden_dims,
                      encoder_spec.use_batchnorm, encoder_spec.activation,
                      output_dim=encoder_spec.input_dim)
        return cls(Network.create(encoder_spec, rng), Network.create(dec, rng),
                   Network.create(dec, rng), alpha, masked_only_mse)

    def trainables(self) -> dict:
        return {**prefixed("encoder", self.encoder.params.trainable()),
                **prefixed("feature_decoder", self.feature_decoder.params.trainable()),
                **prefixed("mask_decoder", self.mask_decoder.params.trainable())}

    def loss_and_grads(self, x, x_tilde, mask):
        """Returns ``((L_m, L_f, L), grads)``."""
        z, cz = self.encoder.forward(x_tilde)
        feat, cf = self.feature_decoder.forward(z)
        logits, cm = self.mask_decoder.forward(z)
        prob = sigmoid(logits)
        losses, d_feat, d_prob = vime_losses_with_grad(
            x, mask, feat, prob, self.alpha, self.masked_only_mse
        )
        gf, dz_f = self.feature_decoder.backward(cf, d_feat)
        gm, dz_m = self.mask_decoder.backward(cm, d_prob * prob * (1.0 - prob))
        ge, _ = self.encoder.backward(cz, dz_f + dz_m)
        grads = {**prefixed("encoder", ge), **prefixed("feature_decoder", gf),
                 **prefixed("mask_decoder", gm)}
        return losses, grads


def vime_step(model: VimeModel, batch, marginals, p_m: float, rng, opt: AdamState):
    """One Adam step on ``L_m + alpha * L_f``; returns ``(L_m, L_f, L)``."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    x_tilde, mask = vime_corrupt(batch, marginals, p_m, rng)
    losses, grads = model.loss_and_grads(batch, x_tilde, mask)
    adam_step(model.trainables(), grads, opt)
    return losses


def _byol_head(in_dim: int, hidden: int, out: int) -> MlpSpec:
    # linear -> batch-norm -> ReLU -> linear
    return MlpSpec(in_dim, (hidden,), use_batchnorm=True, output_dim=out)


@dataclass
class ByolModel:
    """Online encoder/projector/predictor and an EMA target encoder/projector."""

    encoder: Network
    projector: Network
    predictor: Network
    target_encoder: Network
    target_projector: Network
    decay: float = 0.99
    symmetrize: bool = False
    corrupt_both: bool = False

    @classmethod
    def create(cls, encoder_spec: MlpSpec, seed, hidden_dim: int = 4096, out_dim: int = 256,
               decay: float = 0.99, symmetrize: bool = False,
               corrupt_both: bool = False) -> "ByolModel":
        rng = np.random.default_rng(seed)
        enc = Network.create(encoder_spec, rng)
        proj = Network.create(_byol_head(encoder_spec.out_dim, hidden_dim, out_dim), rng)
        pred = Network.create(_byol_head(out_dim, hidden_dim, out_dim), rng)
        return cls(enc, proj, pred, enc.copy(), proj.copy(), decay, symmetrize, corrupt_both)

    def trainables(self) -> dict:
        """Online parameters only; the target branch never reaches the optimizer."""
        return {**prefixed("encoder", self.encoder.params.trainable()),
                **prefixed("projector", self.projector.params.trainable()),
                **prefixed("predictor", self.predictor.params.trainable())}

    def target_arrays(self) -> dict:
        return {**prefixed("target_encoder", self.target_encoder.params.trainable()),
                **prefixed("target_projector", self.target_projector.params.trainable())}

    def _target(self, x):
        # stop-gradient branch: batch statistics, no backward pass
        z, _ = self.target_encoder.forward(x, "train")
        return self.target_projector.forward(z, "train")[0]

    def _online_pass(self, x, target_proj):
        z, cz = self.encoder.forward(x)
        g, cg = self.projector.forward(z)
        p, cp = self.predictor.forward(g)
        loss, dp = byol_loss_with_grad(p, target_proj)
        gq, dg = self.predictor.backward(cp, dp)
        gg, dz = self.projector.backward(cg, dg)
        ge, _ = self.encoder.backward(cz, dz)
        return loss, {**prefixed("encoder", ge), **prefixed("projector", gg),
                      **prefixed("predictor", gq)}

    def loss_and_grads(self, x_online, x_target, target_proj=None):
        """Loss of ``q(g(e(x_online)))`` against ``g_xi(e_xi(x_target))``.

        ``target_proj`` may be passed to hold the target output fixed.
        With ``symmetrize`` the swapped pair is added and both halves averaged.
        """
        if target_proj is None:
            target_proj = self._target(x_target)
        loss, grads = self._online_pass(x_online, target_proj)
        if self.symmetrize:
            loss2, grads2 = self._online_pass(x_target, self._target(x_online))
            loss = 0.5 * (loss + loss2)
            grads = {k: 0.5 * v for k, v in _add(grads, grads2).items()}
        return loss, grads

    def update_target(self):
        ema_update(self.encoder.params, self.target_encoder.params, self.decay)
        ema_update(self.projector.params, self.target_projector.params, self.decay)


def byol_step(model: ByolModel, batch, marginals, p_m: float, rng, opt: AdamState) -> float:
    """Gradient step on the online branch, then the EMA target update; returns the batch loss."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    x_target, _ = vime_corrupt(batch, marginals, p_m, rng)
    x_online = vime_corrupt(batch, marginals, p_m, rng)[0] if model.corrupt_both else batch
    loss, grads = model.loss_and_grads(x_online, x_target)
    adam_step(model.trainables(), grads, opt)
    model.update_target()
    return loss
