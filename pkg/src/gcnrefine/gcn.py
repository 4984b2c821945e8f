"""Two-layer GCN for binary node classification, trained full-batch.

    probs = sigmoid(A_hat @ relu(A_hat @ X @ W0) @ W1)

with ``A_hat = D^-1/2 (A + I) D^-1/2``. Gradients are derived by hand and
the optimizer is Adam; the loss is binary cross-entropy (natural log)
averaged over labeled nodes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import UNLABELED, DegenerateLabelsError, RefinementGraph

LOSS_EPS = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-2
    hidden: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")


@dataclass(eq=False)
class GcnModel:
    w0: np.ndarray  # (F, H)
    w1: np.ndarray  # (H, 1)
    losses: list = field(default_factory=list)

    def __post_init__(self):
        self.w0 = np.asarray(self.w0, dtype=np.float64)
        self.w1 = np.asarray(self.w1, dtype=np.float64).reshape(-1, 1)
        if self.w0.ndim != 2 or self.w0.shape[1] != self.w1.shape[0]:
            raise ValueError(f"incompatible weight shapes {self.w0.shape} and {self.w1.shape}")
        if not (np.isfinite(self.w0).all() and np.isfinite(self.w1).all()):
            raise ValueError("model weights must be finite")

    @property
    def hidden(self) -> int:
        return self.w0.shape[1]


def renormalize_adjacency(a) -> sp.csr_matrix:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the row sums of ``A + I``."""
    a = sp.csr_matrix(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if a.nnz and a.data.min() < 0:
        raise ValueError("adjacency weights must be non-negative")
    if a.diagonal().any():
        raise ValueError("adjacency must have a zero diagonal")
    if abs(a - a.T).sum() > 0:
        raise ValueError("adjacency must be symmetric")
    at = (a + sp.identity(n, format="csr")).tocsr()
    d = np.asarray(at.sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(d)
    out = sp.diags(s) @ at @ sp.diags(s)
    out = sp.csr_matrix(out)
    out.sort_indices()
    return out


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(n_features: int, hidden: int, rng) -> GcnModel:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return GcnModel(glorot_uniform(n_features, hidden, rng), glorot_uniform(hidden, 1, rng))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _forward(model: GcnModel, a_hat, x):
    ax = a_hat @ x
    z1 = ax @ model.w0
    h = np.maximum(z1, 0.0)
    ah = a_hat @ h
    z2 = (ah @ model.w1).ravel()
    return ax, z1, ah, z2


def logits(model: GcnModel, a_hat, x) -> np.ndarray:
    return _forward(model, a_hat, np.asarray(x, dtype=np.float64))[3]


def forward(model: GcnModel, a_hat, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w0.shape[0]:
        raise ValueError(f"features of shape {x.shape} do not match W0 {model.w0.shape}")
    if a_hat.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"A_hat {a_hat.shape} does not match {x.shape[0]} nodes")
    return sigmoid(logits(model, a_hat, x))


def _labeled(labels):
    labels = np.asarray(labels)
    mask = labels != UNLABELED
    if not mask.any():
        raise DegenerateLabelsError("no labeled nodes")
    return mask, labels[mask].astype(np.float64)


def loss(probs, labels, eps: float = LOSS_EPS) -> float:
    """Mean BCE over labeled nodes, probabilities clamped to ``[eps, 1 - eps]``."""
    mask, y = _labeled(labels)
    p = np.clip(np.asarray(probs, dtype=np.float64)[mask], eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def loss_from_logits(z, labels) -> float:
    """Overflow-free masked BCE evaluated directly on logits."""
    mask, y = _labeled(labels)
    z = np.asarray(z, dtype=np.float64)[mask]
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def gradients(model: GcnModel, a_hat, x, labels):
    """Loss and its exact gradients with respect to ``W0`` and ``W1``.

    Returns ``(loss, dW0, dW1)``. ReLU'(0) is taken as 0.
    """
    x = np.asarray(x, dtype=np.float64)
    mask, y = _labeled(labels)
    ax, z1, ah, z2 = _forward(model, a_hat, x)
    g = np.zeros_like(z2)
    g[mask] = (sigmoid(z2[mask]) - y) / mask.sum()
    g = g[:, None]
    dw1 = ah.T @ g
    dh = (a_hat.T @ g) @ model.w1.T
    dz1 = dh * (z1 > 0)
    dw0 = ax.T @ dz1
    return loss_from_logits(z2, labels), dw0, dw1


class Adam:
    def __init__(self, shapes, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fit(a_hat, x, labels, cfg: TrainConfig | None = None, rng=None) -> GcnModel:
    """Train on a prepared ``A_hat`` / feature matrix pair.

    ``model.losses`` holds the loss before each update, followed by the loss
    of the returned (final-epoch) model, so it has ``epochs + 1`` entries.
    """
    cfg = cfg or TrainConfig()
    labels = np.asarray(labels)
    mask, y = _labeled(labels)
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("labeled nodes cover a single class")
    x = np.asarray(x, dtype=np.float64)
    model = init_model(x.shape[1], cfg.hidden, rng if rng is not None else cfg.seed)
    opt = Adam([model.w0.shape, model.w1.shape], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_adam)
    history = []
    for _ in range(cfg.epochs):
        value, dw0, dw1 = gradients(model, a_hat, x, labels)
        history.append(value)
        opt.step([model.w0, model.w1], [dw0, dw1])
    history.append(loss_from_logits(logits(model, a_hat, x), labels))
    model.losses = history
    return model


def train(graph: RefinementGraph, cfg: TrainConfig | None = None, rng=None) -> GcnModel:
    return fit(renormalize_adjacency(graph.adjacency), graph.features, graph.labels, cfg, rng)


def predict_proba(model: GcnModel, graph: RefinementGraph, a_hat=None) -> np.ndarray:
    if a_hat is None:
        a_hat = renormalize_adjacency(graph.adjacency)
    return forward(model, a_hat, graph.features)


def predict(model: GcnModel, graph: RefinementGraph, a_hat=None) -> np.ndarray:
    """Node labels: 1 where the forward probability is strictly above 0.5."""
    return (predict_proba(model, graph, a_hat) > 0.5).astype(np.uint8)


# -------------------------------------------------------------- checkpoint


def save_checkpoint(model: GcnModel, path) -> None:
    """ASCII header ``GCN <F> <H>`` then W0 and W1 as row-major little-endian f64."""
    f, h = model.w0.shape
    with open(path, "wb") as fh:
        fh.write(f"GCN {f} {h}\n".encode())
        fh.write(np.ascontiguousarray(model.w0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.w1, dtype="<f8").tobytes())


def load_checkpoint(path) -> GcnModel:
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    magic, f, h = head.decode().split()
    if magic != "GCN":
        raise ValueError(f"{path} is not a GCN checkpoint")
    f, h = int(f), int(h)
    w = np.frombuffer(body, dtype="<f8")
    if w.size != f * h + h:
        raise ValueError(f"{path}: expected {f * h + h} weights, found {w.size}")
    return GcnModel(w[: f * h].reshape(f, h).copy(), w[f * h :].reshape(h, 1).copy())
