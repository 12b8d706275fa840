"""Multilayer perceptrons: architecture, parameters, forward and backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError, NumericError
from . import layers

ACTIVATIONS = ("relu", "identity")
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a stack of ``dense -> [batch-norm] -> activation`` blocks.

    ``output_dim``, when set, appends a plain linear read-out (no batch-norm,
    no activation) after the hidden blocks. Encoders leave it unset, so the
    embedding is the output of the last hidden block.
    """

    input_dim: int
    hidden_dims: tuple[int, ...]
    use_batchnorm: bool = True
    activation: str = "relu"
    output_dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ContractError(f"all layer widths must be >= 1, got {self}")
        if self.output_dim is not None and self.output_dim < 1:
            raise ContractError(f"output_dim must be >= 1, got {self.output_dim}")
        if not self.hidden_dims and self.output_dim is None:
            raise ContractError("an MLP needs at least one hidden block or a read-out layer")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")

    @property
    def out_dim(self) -> int:
        return self.output_dim if self.output_dim is not None else self.hidden_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.hidden_dims) + (self.output_dim is not None)

    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(fan_in, fan_out)`` of every dense layer in order."""
        dims = [self.input_dim, *self.hidden_dims]
        if self.output_dim is not None:
            dims.append(self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    def is_block(self, layer: int) -> bool:
        """True for hidden blocks, False for the linear read-out."""
        return layer < len(self.hidden_dims)


@dataclass
class ParamStore:
    """Named parameter arrays of one network.

    Keys are ``"<layer>.weight"``, ``"<layer>.bias"`` and, for batch-norm
    blocks, ``"<layer>.gamma"``, ``"<layer>.beta"``, ``"<layer>.running_mean"``
    and ``"<layer>.running_var"``. Running statistics are buffers: they never
    receive gradients.
    """

    arrays: dict[str, np.ndarray]
    bn_momentum: float = BN_MOMENTUM
    bn_eps: float = BN_EPS

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if ".running_" not in k}

    def buffers(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if ".running_" in k}

    def copy(self) -> "ParamStore":
        return ParamStore(
            {k: v.copy() for k, v in self.arrays.items()}, self.bn_momentum, self.bn_eps
        )

    def tobytes(self) -> bytes:
        return b"".join(self.arrays[k].tobytes() for k in sorted(self.arrays))


def init_params(spec: MlpSpec, rng: np.random.Generator) -> ParamStore:
    """Scaled-normal weights (std sqrt(2/fan_in) before ReLU, sqrt(1/fan_in) otherwise), zero biases."""
    arrays: dict[str, np.ndarray] = {}
    for l, (fan_in, fan_out) in enumerate(spec.layer_shapes()):
        gain = 2.0 if spec.is_block(l) and spec.activation == "relu" else 1.0
        arrays[f"{l}.weight"] = rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_out, fan_in))
        arrays[f"{l}.bias"] = np.zeros(fan_out)
        if spec.is_block(l) and spec.use_batchnorm:
            arrays[f"{l}.gamma"] = np.ones(fan_out)
            arrays[f"{l}.beta"] = np.zeros(fan_out)
            arrays[f"{l}.running_mean"] = np.zeros(fan_out)
            arrays[f"{l}.running_var"] = np.ones(fan_out)
    return ParamStore(arrays)


@dataclass
class ForwardCache:
    spec: MlpSpec
    params: ParamStore
    mode: str
    layers: list[dict] = field(default_factory=list)


def mlp_forward(spec: MlpSpec, params: ParamStore, x: np.ndarray, mode: str = "train"):
    """Run the network; returns ``(output, cache)``.

    In ``"train"`` mode batch-norm uses batch statistics and updates the
    running statistics in place. ``"eval"`` mode uses running statistics and
    touches nothing.
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError(
            f"input shape {x.shape} does not match input_dim {spec.input_dim}"
        )
    cache = ForwardCache(spec, params, mode)
    h = x
    for l in range(spec.n_layers):
        entry = {"x": h}
        h = layers.dense_forward(h, params[f"{l}.weight"], params[f"{l}.bias"])
        if spec.is_block(l):
            if spec.use_batchnorm:
                gamma, beta = params[f"{l}.gamma"], params[f"{l}.beta"]
                if mode == "train":
                    h, entry["bn"], mean, var = layers.batchnorm_train(
                        h, gamma, beta, params.bn_eps
                    )
                    n = h.shape[0]
                    m = params.bn_momentum
                    rm, rv = params[f"{l}.running_mean"], params[f"{l}.running_var"]
                    rm *= 1.0 - m
                    rm += m * mean
                    rv *= 1.0 - m
                    rv += m * var * (n / (n - 1))
                else:
                    h = layers.batchnorm_eval(
                        h, gamma, beta,
                        params[f"{l}.running_mean"], params[f"{l}.running_var"],
                        params.bn_eps,
                    )
            if spec.activation == "relu":
                entry["pre_act"] = h
                h = layers.relu(h)
        if not np.isfinite(h).all():
            raise NumericError(f"non-finite activation at layer {l}")
        cache.layers.append(entry)
    return h, cache


def mlp_backward(cache: ForwardCache, upstream: np.ndarray):
    """Reverse-mode pass; returns ``(grads, dx)`` with ``grads`` keyed like the trainable params."""
    if cache.mode != "train":
        raise ContractError("mlp_backward needs a cache from a train-mode forward pass")
    spec, params = cache.spec, cache.params
    grads: dict[str, np.ndarray] = {}
    dh = np.asarray(upstream, dtype=np.float64)
    expected = (cache.layers[0]["x"].shape[0], spec.out_dim)
    if dh.shape != expected:
        raise DimensionError(f"upstream shape {dh.shape} does not match output shape {expected}")
    for l in reversed(range(spec.n_layers)):
        entry = cache.layers[l]
        if spec.is_block(l):
            if "pre_act" in entry:
                dh = layers.relu_backward(entry["pre_act"], dh)
            if "bn" in entry:
                grads[f"{l}.gamma"], grads[f"{l}.beta"], dh = layers.batchnorm_backward(
                    entry["bn"], dh
                )
        w = params[f"{l}.weight"]
        grads[f"{l}.weight"], grads[f"{l}.bias"], dh = layers.dense_backward(entry["x"], w, dh)
    return grads, dh


@dataclass
class Network:
    """An :class:`MlpSpec` bound to its :class:`ParamStore`."""

    spec: MlpSpec
    params: ParamStore

    @classmethod
    def create(cls, spec: MlpSpec, seed) -> "Network":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(spec, init_params(spec, rng))

    def forward(self, x, mode="train"):
        return mlp_forward(self.spec, self.params, x, mode)

    def backward(self, cache, upstream):
        return mlp_backward(cache, upstream)

    def __call__(self, x) -> np.ndarray:
        """Eval-mode output."""
        return mlp_forward(self.spec, self.params, x, "eval")[0]

    def copy(self) -> "Network":
        return Network(self.spec, self.params.copy())


def prefixed(prefix: str, arrays: dict) -> dict:
    return {f"{prefix}.{k}": v for k, v in arrays.items()}
