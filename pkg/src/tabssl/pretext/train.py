"""Epoch loop shared by the three pretext methods."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..augment import batch_rng
from ..data import DataTable, marginals as build_marginals
from ..errors import ContractError, NumericError
from ..nn import AdamState, MlpSpec, Network, network_checksum
from .models import ByolModel, ScarfModel, VimeModel, byol_step, scarf_step, vime_step

METHODS = ("scarf", "vime", "byol")


@dataclass
class PretrainConfig:
    """Pretext hyperparameters. Head widths default to the full-size values."""

    method: str = "scarf"
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_dims: tuple[int, ...] = (256, 256, 256, 256)
    use_batchnorm: bool = True
    corruption_fraction: float = 0.3
    mask_prob: float = 0.3
    corruption_seed: int | None = None
    scarf_tau: float = 1.0
    scarf_variant: str = "standard_infonce"
    scarf_proj_hidden: int = 256
    scarf_proj_dim: int = 256
    vime_alpha: float = 1.0
    vime_masked_only_mse: bool = False
    byol_lambda: float = 0.99
    byol_symmetrize: bool = False
    byol_corrupt_both: bool = False
    byol_hidden_dim: int = 4096
    byol_out_dim: int = 256

    def __post_init__(self):
        self.hidden_dims = tuple(self.hidden_dims)
        if self.method not in METHODS:
            raise ContractError(f"unknown pretext method {self.method!r}")
        if self.epochs < 0 or self.batch_size < 2:
            raise ContractError("epochs must be >= 0 and batch_size >= 2")

    def encoder_spec(self, input_dim: int) -> MlpSpec:
        return MlpSpec(input_dim, self.hidden_dims, self.use_batchnorm)


@dataclass
class PretrainReport:
    method: str
    losses: list[float] = field(default_factory=list)
    mask_losses: list[float] = field(default_factory=list)
    feature_losses: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    checksum: str = ""

    def loss_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.method == "vime":
            w.writerow(["epoch", "loss", "L_m", "L_f"])
            for i, row in enumerate(zip(self.losses, self.mask_losses, self.feature_losses)):
                w.writerow([i + 1, *(repr(v) for v in row)])
        else:
            w.writerow(["epoch", "loss"])
            for i, v in enumerate(self.losses):
                w.writerow([i + 1, repr(v)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return asdict(self)


def build_model(cfg: PretrainConfig, input_dim: int):
    spec = cfg.encoder_spec(input_dim)
    init_seed = [cfg.seed, 0]
    if cfg.method == "scarf":
        return ScarfModel.create(spec, init_seed, cfg.scarf_proj_hidden, cfg.scarf_proj_dim,
                                 cfg.scarf_tau, cfg.scarf_variant)
    if cfg.method == "vime":
        return VimeModel.create(spec, init_seed, cfg.vime_alpha, cfg.vime_masked_only_mse)
    return ByolModel.create(spec, init_seed, cfg.byol_hidden_dim, cfg.byol_out_dim,
                            cfg.byol_lambda, cfg.byol_symmetrize, cfg.byol_corrupt_both)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches; a trailing batch of one row is dropped."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size >= 2:
            yield idx


def fit_pretext(data: DataTable, cfg: PretrainConfig):
    """Train the full pretext model; returns ``(model, report)``."""
    x = data.features
    pools = build_marginals(data)
    model = build_model(cfg, data.n_features)
    opt = AdamState(learning_rate=cfg.learning_rate)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    corruption_seed = cfg.seed if cfg.corruption_seed is None else cfg.corruption_seed
    report = PretrainReport(cfg.method, config=asdict(cfg))

    start = time.perf_counter()
    step = 0
    for epoch in range(cfg.epochs):
        total = l_m = l_f = 0.0
        seen = 0
        for idx in batches(len(x), cfg.batch_size, shuffle_rng):
            rng = batch_rng(corruption_seed, step)
            step += 1
            xb = x[idx]
            if cfg.method == "scarf":
                loss = scarf_step(model, xb, pools, cfg.corruption_fraction, rng, opt)
            elif cfg.method == "vime":
                bm, bf, loss = vime_step(model, xb, pools, cfg.mask_prob, rng, opt)
                l_m += bm * len(idx)
                l_f += bf * len(idx)
            else:
                loss = byol_step(model, xb, pools, cfg.mask_prob, rng, opt)
            total += loss * len(idx)
            seen += len(idx)
        mean = total / max(seen, 1)
        if not np.isfinite(mean):
            raise NumericError(f"pretext loss became non-finite at epoch {epoch + 1}")
        report.losses.append(mean)
        if cfg.method == "vime":
            report.mask_losses.append(l_m / max(seen, 1))
            report.feature_losses.append(l_f / max(seen, 1))
    report.wall_time = time.perf_counter() - start
    report.checksum = network_checksum(model.encoder)
    return model, report


def pretrain(method: str, data: DataTable, cfg: PretrainConfig | None = None):
    """Run a pretext task and keep only the encoder.

    Projectors, decoders, the predictor and the target branch are discarded.
    Returns ``(encoder, report)``.
    """
    cfg = PretrainConfig(method=method) if cfg is None else cfg
    if cfg.method != method:
        cfg = PretrainConfig(**{**asdict(cfg), "method": method})
    model, report = fit_pretext(data, cfg)
    return extract_encoder(model), report


def extract_encoder(model) -> Network:
    return model.encoder.copy()
