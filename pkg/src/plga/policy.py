"""Behavioral-cloning policies: feature encoders and a small MLP trained
from scratch with full-batch gradient descent.

The raw-state encoder (GCBC) concatenates a two-channel grid encoding
with a hashed bag-of-words utterance embedding; abstraction-level
policies (LGA / PLGA) see only the flattened binary mask, so utterances
cannot influence their predictions by construction.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .captioner import AbstractState
from .catalog import Catalog, default_catalog
from .world import Scene

BOW_DIM = 32
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


@dataclass(frozen=True)
class EncodedExample:
    input: np.ndarray
    target: np.ndarray
    variant_tag: str  # gcbc | lga | plga


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 2000
    seed: int = 0
    hidden_dims: tuple[int, int] = (64, 64)
    hidden_activation: str = "tanh"  # tanh | identity

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0:
            raise ValueError("learning rate and epochs must be positive")


@dataclass
class PolicyModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str
    rng_seed: int
    final_loss: float = float("nan")
    loss_history: list[float] = field(default_factory=list, repr=False)

    def save(self, path: str | Path) -> None:
        data = {
            "layer_dims": list(self.layer_dims),
            "hidden_activation": self.hidden_activation,
            "rng_seed": self.rng_seed,
            "final_loss": self.final_loss,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        Path(path).write_text(json.dumps(data), "utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyModel":
        data = json.loads(Path(path).read_text("utf-8"))
        return cls(
            layer_dims=tuple(data["layer_dims"]),
            weights=[np.asarray(w, dtype=float) for w in data["weights"]],
            biases=[np.asarray(b, dtype=float) for b in data["biases"]],
            hidden_activation=data["hidden_activation"],
            rng_seed=data["rng_seed"],
            final_loss=data["final_loss"],
        )


# ---------------------------------------------------------------------------
# encoders


def hashed_bow(utterance: str, dim: int = BOW_DIM) -> np.ndarray:
    """L2-normalized hashed bag-of-words; deterministic across processes."""
    vec = np.zeros(dim)
    for token in _TOKEN_RE.findall(utterance.lower()):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        vec[int.from_bytes(digest[:4], "big") % dim] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def encode_gcbc(scene: Scene, utterance: str, catalog: Catalog | None = None) -> np.ndarray:
    """Raw-state encoding: per-cell (kind, texture) index channels scaled
    to (0, 1] with 0 for empty cells, then the utterance embedding."""
    catalog = catalog or default_catalog()
    w, h = scene.grid_dims
    grid = np.zeros((h, w, 2))
    n_kinds = len(catalog.kinds)
    n_textures = len(catalog.textures)
    for obj in scene.objects:
        row, col = obj.cell
        grid[row, col, 0] = catalog.kind_id(obj.kind) / n_kinds
        grid[row, col, 1] = catalog.texture_id(obj.texture) / n_textures
    return np.concatenate([grid.reshape(-1), hashed_bow(utterance)])


def encode_abstract(abs_state: AbstractState) -> np.ndarray:
    """Flattened (row-major) binary mask as floats."""
    return abs_state.mask.astype(float).reshape(-1)


def gcbc_input_dim(catalog: Catalog | None = None, grid_dims: tuple[int, int] = (12, 12)) -> int:
    return grid_dims[0] * grid_dims[1] * 2 + BOW_DIM


# ---------------------------------------------------------------------------
# MLP


def init_model(
    input_dim: int,
    output_dim: int,
    cfg: TrainConfig,
) -> PolicyModel:
    dims = (input_dim, *cfg.hidden_dims, output_dim)
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PolicyModel(
        layer_dims=dims,
        weights=weights,
        biases=biases,
        hidden_activation=cfg.hidden_activation,
        rng_seed=cfg.seed,
    )


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else z


def _activate_grad(a: np.ndarray, kind: str) -> np.ndarray:
    return 1.0 - a**2 if kind == "tanh" else np.ones_like(a)


def _forward(model: PolicyModel, X: np.ndarray) -> list[np.ndarray]:
    """Activations per layer, input first, linear output last."""
    activations = [X]
    a = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if i == last else _activate(z, model.hidden_activation)
        activations.append(a)
    return activations


def _loss_and_grads(model: PolicyModel, X: np.ndarray, Y: np.ndarray):
    activations = _forward(model, X)
    pred = activations[-1]
    diff = pred - Y
    loss = float(np.mean(diff**2))
    grad_w = [np.zeros_like(w) for w in model.weights]
    grad_b = [np.zeros_like(b) for b in model.biases]
    dz = 2.0 * diff / diff.size
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ dz
        grad_b[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ model.weights[i].T
            dz = da * _activate_grad(activations[i], model.hidden_activation)
    return loss, grad_w, grad_b


def train(examples: list[EncodedExample], cfg: TrainConfig) -> PolicyModel:
    """Full-batch gradient descent on mean squared error."""
    if not examples:
        raise ValueError("need at least one training example")
    X = np.stack([e.input for e in examples])
    Y = np.stack([e.target for e in examples])
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("inconsistent example dimensions")
    model = init_model(X.shape[1], Y.shape[1], cfg)
    history = []
    for epoch in range(cfg.epochs):
        loss, grad_w, grad_b = _loss_and_grads(model, X, Y)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        history.append(loss)
        for i in range(len(model.weights)):
            model.weights[i] -= cfg.learning_rate * grad_w[i]
            model.biases[i] -= cfg.learning_rate * grad_b[i]
    final_loss, _, _ = _loss_and_grads(model, X, Y)
    if not np.isfinite(final_loss):
        raise DivergenceError(cfg.epochs, final_loss)
    model.final_loss = final_loss
    model.loss_history = history + [final_loss]
    return model


def training_curve_csv(model: PolicyModel) -> str:
    """The loss trajectory as (epoch, loss) CSV."""
    lines = ["epoch,loss"]
    lines += [f"{epoch},{loss!r}" for epoch, loss in enumerate(model.loss_history)]
    return "\n".join(lines) + "\n"


def predict(model: PolicyModel, x: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Forward pass; outputs are clamped to the unit box at execution time."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.layer_dims[0],):
        raise ValueError(f"input dim {x.shape} does not match model {model.layer_dims[0]}")
    out = _forward(model, x[None, :])[-1][0]
    return np.clip(out, 0.0, 1.0) if clamp else out


def gradient_check(model: PolicyModel, example: EncodedExample, h: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences
    over a seeded 5% weight subsample."""
    X = example.input[None, :]
    Y = example.target[None, :]
    _, grad_w, grad_b = _loss_and_grads(model, X, Y)
    params = [(w, g) for w, g in zip(model.weights, grad_w)] + [
        (b, g) for b, g in zip(model.biases, grad_b)
    ]
    rng = np.random.default_rng(model.rng_seed + 1)
    worst = 0.0
    for tensor, grad in params:
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        n_checks = max(1, int(0.05 * flat.size))
        for idx in rng.choice(flat.size, size=n_checks, replace=False):
            original = flat[idx]
            flat[idx] = original + h
            up, _, _ = _loss_and_grads(model, X, Y)
            flat[idx] = original - h
            down, _, _ = _loss_and_grads(model, X, Y)
            flat[idx] = original
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(numeric - gflat[idx]) / denom)
    return worst
