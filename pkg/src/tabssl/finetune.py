"""Linear classification head on top of an encoder, with early-stopped training."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DataTable
from .errors import ContractError, DimensionError
from .nn import AdamState, MlpSpec, Network, adam_step, prefixed

MODES = ("frozen", "unfrozen")


@dataclass
class Classifier:
    encoder: Network
    head: Network
    mode: str = "unfrozen"

    @property
    def n_classes(self) -> int:
        return self.head.spec.out_dim

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.encoder.spec.input_dim:
            raise DimensionError(
                f"input has {x.shape[-1]} features, encoder expects {self.encoder.spec.input_dim}"
            )
        return self.head(self.encoder(x))


@dataclass
class FitConfig:
    batch_size: int = 8
    max_epochs: int = 100
    patience: int = 30
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ContractError("batch_size and max_epochs must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ContractError(
                f"patience must lie in [1, max_epochs], got {self.patience}"
            )


@dataclass
class FitReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    restored_best: bool = False
    test_accuracy: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def attach_head(encoder: Network, n_classes: int, seed, mode: str = "unfrozen") -> Classifier:
    """Fresh linear head ``embedding -> n_classes``; the encoder is copied, never modified."""
    if n_classes < 2:
        raise ContractError(f"a classifier needs at least 2 classes, got {n_classes}")
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}, got {mode!r}")
    spec = MlpSpec(encoder.spec.out_dim, (), output_dim=n_classes)
    return Classifier(encoder.copy(), Network.create(spec, seed), mode)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    n = logits.shape[0]
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = np.exp(shifted - log_z[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def _check_labels(table: DataTable, n_classes: int, what: str):
    if table.labels is None:
        raise ContractError(f"{what} set has no labels")
    if table.labels.size and table.labels.max() >= n_classes:
        raise ContractError(
            f"{what} label {int(table.labels.max())} out of range for {n_classes} classes"
        )


def _snapshot(clf: Classifier):
    return clf.encoder.params.copy(), clf.head.params.copy()


def fit(clf: Classifier, train: DataTable, val: DataTable | None, cfg: FitConfig,
        test: DataTable | None = None) -> FitReport:
    """Minimize softmax cross-entropy with Adam and early stopping on validation loss.

    Frozen mode trains the head alone on eval-mode embeddings, so the
    encoder's parameters and running statistics are never touched.
    Unfrozen mode trains everything with batch statistics; a trailing batch
    of one row is dropped there. The parameters of the epoch with the
    lowest validation loss are restored at the end.
    """
    if train.n_rows == 0:
        raise ContractError("empty training set")
    _check_labels(train, clf.n_classes, "training")
    if val is not None and val.n_rows:
        _check_labels(val, clf.n_classes, "validation")
    else:
        val = None

    frozen = clf.mode == "frozen"
    opt = AdamState(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])
    y = train.labels
    x = clf.encoder(train.features) if frozen else train.features
    x_val = None
    if val is not None:
        x_val = clf.encoder(val.features) if frozen else val.features

    report = FitReport()
    best_loss = np.inf
    best = None
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        total = 0.0
        seen = 0
        order = rng.permutation(train.n_rows)
        for start in range(0, train.n_rows, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if not frozen and idx.size < 2:
                continue
            if frozen:
                logits, ch = clf.head.forward(x[idx])
                loss, dlogits = softmax_cross_entropy(logits, y[idx])
                grads, _ = clf.head.backward(ch, dlogits)
                adam_step(clf.head.params.trainable(), grads, opt)
            else:
                z, ce = clf.encoder.forward(x[idx])
                logits, ch = clf.head.forward(z)
                loss, dlogits = softmax_cross_entropy(logits, y[idx])
                gh, dz = clf.head.backward(ch, dlogits)
                ge, _ = clf.encoder.backward(ce, dz)
                params = {**prefixed("encoder", clf.encoder.params.trainable()),
                          **prefixed("head", clf.head.params.trainable())}
                adam_step(params, {**prefixed("encoder", ge), **prefixed("head", gh)}, opt)
            total += loss * idx.size
            seen += idx.size
        report.train_loss.append(total / max(seen, 1))
        report.stop_epoch = epoch

        if val is None:
            continue
        emb = x_val if frozen else clf.encoder(x_val)
        vloss = softmax_cross_entropy(clf.head(emb), val.labels)[0]
        report.val_loss.append(vloss)
        if vloss < best_loss:
            best_loss, best, wait = vloss, _snapshot(clf), 0
            report.best_epoch = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                break

    if best is not None:
        enc_params, head_params = best
        if not frozen:
            clf.encoder.params = enc_params
        clf.head.params = head_params
        report.restored_best = True
    else:
        report.best_epoch = report.stop_epoch
    if test is not None:
        report.test_accuracy = accuracy(predict(clf, test), test.labels)
    return report


def predict(clf: Classifier, data) -> np.ndarray:
    """Arg-max class per row; ties go to the lowest class index."""
    x = data.features if isinstance(data, DataTable) else data
    return np.argmax(clf.logits(x), axis=1)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise DimensionError(f"prediction/truth lengths differ or are empty: {pred.shape} vs {truth.shape}")
    return float(np.mean(pred == truth))
