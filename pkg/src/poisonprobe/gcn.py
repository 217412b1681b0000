"""Graph convolutional node classifier: forward pass, exact reverse-mode
gradients specialized to the fixed layer structure, and semi-supervised
training.

The layer rule is H_{l+1} = relu(Ahat @ (H_l @ W_l)) with no bias terms;
the final graph convolution has no relu and its output rows are the
per-node logits.  Three architectures are supported, differing only in
their hidden widths.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import AttributedGraph, NormalizedAdjacency
from .optim import Adam

# hidden widths between the d-dim input and the class_count output
ARCH_HIDDEN = {
    "gcn2": (16,),
    "gcn3": (64, 16),
    "gcn4": (256, 64, 16),
}


class ConfigurationError(ValueError):
    """Dimension mismatch or invalid training/attack configuration."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class GcnModel:
    """Ordered layer weights plus an architecture descriptor.

    weights[l] has shape (in_dim, out_dim); relu is applied after every
    graph convolution except the last.  Immutable by convention once
    trained.
    """

    arch: str
    weights: list[np.ndarray]
    class_count: int
    seed: int = 0

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def init(cls, arch: str, in_dim: int, class_count: int, seed: int = 0) -> "GcnModel":
        """Glorot-uniform initialization with a seeded generator."""
        if arch not in ARCH_HIDDEN:
            raise ConfigurationError(f"unknown architecture {arch!r}; pick one of {sorted(ARCH_HIDDEN)}")
        if class_count < 2:
            raise ConfigurationError("need at least two classes")
        rng = np.random.default_rng(seed)
        dims = [in_dim, *ARCH_HIDDEN[arch], class_count]
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        return cls(arch=arch, weights=weights, class_count=class_count, seed=seed)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    dropout_rate: float = 0.5
    max_epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be >= 1")


@dataclass
class Tape:
    """Recorded intermediates of one forward pass.

    inputs[l] is the (dropout-scaled) input actually multiplied into W_l;
    preacts[l] the pre-activation output of layer l.  Replaying reproduces
    the recorded arrays bit for bit.
    """

    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    dropout_masks: list[np.ndarray | None] = field(default_factory=list)


def _check_dims(model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray):
    if X.ndim != 2 or X.shape[0] != ahat.n:
        raise ConfigurationError(f"feature matrix {X.shape} does not match graph with {ahat.n} nodes")
    if X.shape[1] != model.in_dim:
        raise ConfigurationError(f"feature dim {X.shape[1]} does not match model input dim {model.in_dim}")


def _forward(model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray,
             dropout_rate: float = 0.0, rng: np.random.Generator | None = None,
             tape: Tape | None = None) -> np.ndarray:
    """Stacked graph convolutions; returns the n x C logit matrix.

    With dropout_rate > 0 and an rng, inverted dropout is applied to every
    layer input (training mode); masks land on the tape when given.
    """
    H = X
    L = model.layer_count
    for l, W in enumerate(model.weights):
        mask = None
        if dropout_rate > 0.0 and rng is not None:
            mask = (rng.random(H.shape) >= dropout_rate) / (1.0 - dropout_rate)
            H = H * mask
        pre = ahat.matmul(H @ W)
        if tape is not None:
            tape.inputs.append(H)
            tape.preacts.append(pre)
            tape.dropout_masks.append(mask)
        H = np.maximum(pre, 0.0) if l < L - 1 else pre
    return H


def forward_logits(model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray) -> np.ndarray:
    """Inference-mode logits Z (n x class_count), deterministic, no dropout."""
    _check_dims(model, ahat, X)
    return _forward(model, ahat, X)


def replay_tape(model: GcnModel, ahat: NormalizedAdjacency, tape: Tape) -> np.ndarray:
    """Recompute the taped forward pass; bitwise equal to the recording."""
    H = None
    for l, W in enumerate(model.weights):
        H = ahat.matmul(tape.inputs[l] @ W)
        if l < model.layer_count - 1:
            H = np.maximum(H, 0.0)
    return H


def predict(model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray) -> np.ndarray:
    """Per-node label: argmax of the logits, ties broken toward the lowest class id."""
    return np.argmax(forward_logits(model, ahat, X), axis=1)


def _softmax_xent_grad(Z: np.ndarray, labels: np.ndarray, mask: np.ndarray):
    """Mean masked cross-entropy and its exact gradient dL/dZ."""
    Zm = Z[mask]
    shifted = Zm - Zm.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    rows = np.arange(Zm.shape[0])
    logp = shifted[rows, labels[mask]] - np.log(expz.sum(axis=1))
    loss = -logp.mean()
    gZm = probs
    gZm[rows, labels[mask]] -= 1.0
    gZm /= Zm.shape[0]
    gZ = np.zeros_like(Z)
    gZ[mask] = gZm
    return loss, gZ


def backward_weights(model: GcnModel, ahat: NormalizedAdjacency, tape: Tape,
                     gZ: np.ndarray) -> list[np.ndarray]:
    """Reverse pass from an adjoint on the logits to all weight gradients.

    Ahat is symmetric, so the transpose product reuses the forward kernel.
    """
    grads: list[np.ndarray] = [None] * model.layer_count  # type: ignore[list-item]
    g = gZ
    for l in range(model.layer_count - 1, -1, -1):
        if l < model.layer_count - 1:
            g = np.where(tape.preacts[l] > 0.0, g, 0.0)
        gM = ahat.matmul(g)
        grads[l] = tape.inputs[l].T @ gM
        if l > 0:
            g = gM @ model.weights[l].T
            if tape.dropout_masks[l] is not None:
                g = g * tape.dropout_masks[l]
    return grads


def loss_and_grads(model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray,
                   labels: np.ndarray, mask: np.ndarray,
                   dropout_rate: float = 0.0, rng: np.random.Generator | None = None):
    """Masked cross-entropy plus exact gradients for every weight matrix.

    Returns (loss, grads, tape).  mask is a boolean or index array selecting
    the training nodes; it must select at least one node.
    """
    _check_dims(model, ahat, X)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if not mask.any():
            raise ConfigurationError("training mask is empty")
    elif mask.size == 0:
        raise ConfigurationError("training mask is empty")
    tape = Tape()
    Z = _forward(model, ahat, X, dropout_rate=dropout_rate, rng=rng, tape=tape)
    loss, gZ = _softmax_xent_grad(Z, labels, mask)
    grads = backward_weights(model, ahat, tape, gZ)
    return loss, grads, tape


def feature_gradient(model: GcnModel, ahat: NormalizedAdjacency, X: np.ndarray,
                     rows: np.ndarray, z_adjoint: np.ndarray) -> np.ndarray:
    """d(sum(Z * z_adjoint)) / dX restricted to the requested rows.

    Full-graph reference backward in inference mode; the attack uses the
    rank-k incremental engine instead (see `incremental`), which this
    function serves as the dense oracle for.
    """
    _check_dims(model, ahat, X)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= ahat.n):
        raise ConfigurationError("requested rows out of range")
    tape = Tape()
    _forward(model, ahat, X, tape=tape)
    g = z_adjoint
    for l in range(model.layer_count - 1, -1, -1):
        if l < model.layer_count - 1:
            g = np.where(tape.preacts[l] > 0.0, g, 0.0)
        g = ahat.matmul(g) @ model.weights[l].T
    return g[rows]


@dataclass
class TrainReport:
    best_epoch: int
    train_accuracy: float
    val_accuracy: float
    test_accuracy: float | None
    epochs_run: int
    losses: list[float] = field(repr=False, default_factory=list)


def accuracy(pred: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        return float("nan")
    return float((pred[idx] == labels[idx]).mean())


def train(model: GcnModel, graph: AttributedGraph, ahat: NormalizedAdjacency,
          train_idx: np.ndarray, val_idx: np.ndarray, config: TrainConfig,
          test_idx: np.ndarray | None = None) -> tuple[GcnModel, TrainReport]:
    """Full-batch Adam training; keeps the epoch with best validation accuracy.

    Seeded and reproducible: the dropout stream is driven by config.seed
    only.  A non-finite loss aborts with a diagnostic.
    """
    if graph.labels is None:
        raise ConfigurationError("graph has no labels to train on")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if train_idx.size == 0 or val_idx.size == 0:
        raise ConfigurationError("train and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.weights, lr=config.learning_rate,
               beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    labels = graph.labels
    best_val = -1.0
    best_epoch = -1
    best_weights = [w.copy() for w in model.weights]
    losses: list[float] = []
    for epoch in range(config.max_epochs):
        loss, grads, _ = loss_and_grads(model, ahat, graph.X, labels, train_idx,
                                        dropout_rate=config.dropout_rate, rng=rng)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}")
        opt.step(grads)
        losses.append(float(loss))
        pred = predict(model, ahat, graph.X)
        val_acc = accuracy(pred, labels, val_idx)
        # ties go to the later epoch so the weight scale keeps converging
        if val_acc >= best_val:
            best_val = val_acc
            best_epoch = epoch
            best_weights = [w.copy() for w in model.weights]
    trained = GcnModel(arch=model.arch, weights=best_weights,
                       class_count=model.class_count, seed=model.seed)
    pred = predict(trained, ahat, graph.X)
    report = TrainReport(
        best_epoch=best_epoch,
        train_accuracy=accuracy(pred, labels, train_idx),
        val_accuracy=accuracy(pred, labels, val_idx),
        test_accuracy=None if test_idx is None else accuracy(pred, labels, np.asarray(test_idx)),
        epochs_run=config.max_epochs,
        losses=losses,
    )
    return trained, report
