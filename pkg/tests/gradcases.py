"""Random small gradient-check instances shared by the unit and acceptance suites.

Each builder takes a seed and returns ``(loss_fn, params)`` for
:func:`tabssl.nn.grad_check`. Instances stay within N <= 8, d <= 16.
"""

import numpy as np

from tabssl.finetune import softmax_cross_entropy
from tabssl.nn import MlpSpec, Network
from tabssl.nn import layers
from tabssl.pretext import byol_loss_with_grad, info_nce_with_grad, vime_losses_with_grad
from tabssl.pretext.models import ByolModel, ScarfModel, VimeModel


def _shape(rng):
    return int(rng.integers(2, 9)), int(rng.integers(1, 17))


def dense_case(seed):
    rng = np.random.default_rng([seed, 1])
    n, d = _shape(rng)
    out = int(rng.integers(1, 17))
    params = {"x": rng.normal(size=(n, d)), "weight": rng.normal(size=(out, d)),
              "bias": rng.normal(size=out)}
    r = rng.normal(size=(n, out))

    def loss_fn(p):
        y = layers.dense_forward(p["x"], p["weight"], p["bias"])
        up = r + y  # loss = <r, y> + |y|^2 / 2
        dw, db, dx = layers.dense_backward(p["x"], p["weight"], up)
        return float(np.sum(r * y) + 0.5 * np.sum(y * y)), {"x": dx, "weight": dw, "bias": db}

    return loss_fn, params


def relu_case(seed):
    rng = np.random.default_rng([seed, 2])
    n, d = _shape(rng)
    # keep inputs away from the kink, where the derivative is undefined
    x = rng.uniform(0.05, 2.0, size=(n, d)) * rng.choice([-1.0, 1.0], size=(n, d))
    r = rng.normal(size=(n, d))

    def loss_fn(p):
        y = layers.relu(p["x"])
        return float(np.sum(r * y) + 0.5 * np.sum(y * y)), {"x": layers.relu_backward(p["x"], r + y)}

    return loss_fn, {"x": x}


def batchnorm_case(seed):
    rng = np.random.default_rng([seed, 3])
    n, d = _shape(rng)
    # with two rows the normalized output is +-1 whatever x is, so dL/dx is
    # round-off on both sides; three rows is the smallest informative batch
    n = max(n, 3)
    params = {"x": rng.normal(size=(n, d)) * rng.uniform(0.5, 3.0, size=d),
              "gamma": rng.normal(size=d), "beta": rng.normal(size=d)}
    r = rng.normal(size=(n, d))

    def loss_fn(p):
        y, cache, _, _ = layers.batchnorm_train(p["x"], p["gamma"], p["beta"], 1e-5)
        dgamma, dbeta, dx = layers.batchnorm_backward(cache, r + y)
        return float(np.sum(r * y) + 0.5 * np.sum(y * y)), {"x": dx, "gamma": dgamma, "beta": dbeta}

    return loss_fn, params


def cross_entropy_case(seed):
    rng = np.random.default_rng([seed, 4])
    n = int(rng.integers(2, 9))
    k = int(rng.integers(2, 17))
    labels = rng.integers(0, k, size=n)

    def loss_fn(p):
        loss, g = softmax_cross_entropy(p["logits"], labels)
        return loss, {"logits": g}

    return loss_fn, {"logits": rng.normal(size=(n, k)) * 2.0}


def info_nce_case(seed, variant):
    rng = np.random.default_rng([seed, 5])
    n, d = _shape(rng)
    tau = float(rng.uniform(0.2, 2.0))

    def loss_fn(p):
        loss, dq, dqt = info_nce_with_grad(p["q"], p["qt"], tau, variant)
        return loss, {"q": dq, "qt": dqt}

    return loss_fn, {"q": rng.normal(size=(n, d)), "qt": rng.normal(size=(n, d))}


def vime_case(seed, masked_only=False):
    rng = np.random.default_rng([seed, 6])
    n, d = _shape(rng)
    x = rng.normal(size=(n, d))
    mask = (rng.random((n, d)) < 0.4).astype(float)
    alpha = float(rng.uniform(0.0, 2.0))

    def loss_fn(p):
        (_, _, loss), d_feat, d_mask = vime_losses_with_grad(
            x, mask, p["feat"], p["prob"], alpha, masked_only)
        return loss, {"feat": d_feat, "prob": d_mask}

    return loss_fn, {"feat": rng.normal(size=(n, d)), "prob": rng.uniform(0.05, 0.95, size=(n, d))}


def byol_case(seed):
    rng = np.random.default_rng([seed, 7])
    n, d = _shape(rng)
    target = rng.normal(size=(n, d))

    def loss_fn(p):
        loss, dp = byol_loss_with_grad(p["pred"], target)
        return loss, {"pred": dp}

    return loss_fn, {"pred": rng.normal(size=(n, d))}


def mlp_case(seed):
    """Whole encoder (dense -> batch-norm -> ReLU blocks) plus a read-out, in train mode."""
    rng = np.random.default_rng([seed, 8])
    n, d = _shape(rng)
    n = max(n, 3)
    spec = MlpSpec(d, (int(rng.integers(2, 9)), int(rng.integers(2, 9))), output_dim=3)
    net = Network.create(spec, rng)
    x = rng.normal(size=(n, d))
    r = rng.normal(size=(n, 3))

    def loss_fn(p):
        y, cache = net.forward(x)
        grads, _ = net.backward(cache, r)
        return float(np.sum(r * y)), grads

    return loss_fn, _jitter(net.params.trainable(), rng)


def _jitter(arrays, rng):
    # move off the zero-bias, unit-gamma initialization so no unit starts dead
    for v in arrays.values():
        v += 0.1 * rng.normal(size=v.shape)
    return arrays


def _model_fn(model, call):
    def loss_fn(_):
        loss, grads = call()
        return (loss[-1] if isinstance(loss, tuple) else loss), grads
    return loss_fn


def scarf_model_case(seed):
    rng = np.random.default_rng([seed, 9])
    n, d = _shape(rng)
    n = max(n, 3)
    model = ScarfModel.create(MlpSpec(d, (6,)), [seed, 0], 5, 4, float(rng.uniform(0.5, 1.5)))
    x, xt = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    return _model_fn(model, lambda: model.loss_and_grads(x, xt)), _jitter(model.trainables(), rng)


def vime_model_case(seed):
    rng = np.random.default_rng([seed, 10])
    n, d = _shape(rng)
    n = max(n, 3)
    model = VimeModel.create(MlpSpec(d, (6,)), [seed, 0])
    x = rng.normal(size=(n, d))
    mask = (rng.random((n, d)) < 0.3).astype(float)
    xt = np.where(mask > 0, rng.normal(size=(n, d)), x)
    return _model_fn(model, lambda: model.loss_and_grads(x, xt, mask)), _jitter(model.trainables(), rng)


def byol_model_case(seed):
    """Online-branch parameters only; the target output is held fixed."""
    rng = np.random.default_rng([seed, 11])
    n, d = _shape(rng)
    n = max(n, 3)
    model = ByolModel.create(MlpSpec(d, (6,)), [seed, 0], hidden_dim=8, out_dim=4)
    _jitter(model.target_arrays(), rng)
    x, xt = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    target = model._target(xt)
    return _model_fn(model, lambda: model.loss_and_grads(x, xt, target)), _jitter(model.trainables(), rng)


LAYER_CASES = {
    "dense": dense_case,
    "relu": relu_case,
    "batchnorm": batchnorm_case,
    "cross_entropy": cross_entropy_case,
    "info_nce_standard": lambda s: info_nce_case(s, "standard_infonce"),
    "info_nce_as_printed": lambda s: info_nce_case(s, "as_printed"),
    "vime": vime_case,
    "vime_masked_only": lambda s: vime_case(s, True),
    "byol": byol_case,
}

MODEL_CASES = {
    "mlp": mlp_case,
    "scarf_model": scarf_model_case,
    "vime_model": vime_model_case,
    "byol_model": byol_model_case,
}

