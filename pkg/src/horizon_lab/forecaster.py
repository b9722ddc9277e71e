"""Cross-sectional forecasters and their trainers.

Two architectures share one flat parameter vector ``theta``:

``linear``
    ``pred = X @ theta``, ``theta`` has length ``d``.
``one_hidden``
    ``pred = tanh(X @ W + b1) @ v + b2`` with ``theta = [W.ravel() (d*h, row-major), b1 (h), v (h), b2]``.

Training minimizes the MSE between *standardized* predictions and labels,
period by period, averaged over periods.  Standardization of the predictions is
part of the differentiated graph.  For standardized labels this loss equals
``2 - 2 * IC``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateError, ShapeError, TrainingError

logger = logging.getLogger(__name__)

LINEAR = "linear"
ONE_HIDDEN = "one_hidden"
DEFAULT_HIDDEN = 16


@dataclass(frozen=True)
class ModelParams:
    arch: str
    weights: np.ndarray = field(repr=False)
    hidden_width: int = 0

    def __post_init__(self):
        if self.arch not in (LINEAR, ONE_HIDDEN):
            raise ConfigError(f"unknown architecture {self.arch!r}")
        w = np.array(self.weights, dtype=float).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.arch == ONE_HIDDEN and self.hidden_width < 1:
            raise ConfigError("one_hidden needs hidden_width >= 1")
        if self.arch == ONE_HIDDEN and ((w.size - 1) % self.hidden_width or (w.size - 1) // self.hidden_width < 3):
            raise ShapeError(f"{w.size} weights do not fit a one_hidden layout with width {self.hidden_width}")

    @property
    def input_dim(self) -> int:
        if self.arch == LINEAR:
            return self.weights.size
        return (self.weights.size - 1 - 2 * self.hidden_width) // self.hidden_width

    def with_weights(self, weights) -> "ModelParams":
        return replace(self, weights=np.asarray(weights, dtype=float))


def n_params(arch: str, d: int, hidden_width: int = DEFAULT_HIDDEN) -> int:
    return d if arch == LINEAR else d * hidden_width + 2 * hidden_width + 1


def init_model(arch: str, d: int, seed: int, hidden_width: int = DEFAULT_HIDDEN) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    if arch == LINEAR:
        return ModelParams(LINEAR, rng.uniform(-1, 1, d) / math.sqrt(d))
    if arch != ONE_HIDDEN:
        raise ConfigError(f"unknown architecture {arch!r}")
    h = hidden_width
    first = rng.uniform(-1, 1, d * h + h) / math.sqrt(d)
    second = rng.uniform(-1, 1, h + 1) / math.sqrt(h)
    return ModelParams(ONE_HIDDEN, np.concatenate([first, second]), h)


def _unpack(model: ModelParams, d: int):
    h = model.hidden_width
    w = model.weights
    W = w[: d * h].reshape(d, h)
    b1 = w[d * h : d * h + h]
    v = w[d * h + h : d * h + 2 * h]
    return W, b1, v, w[-1]


def _check_dims(model: ModelParams, X: np.ndarray) -> None:
    if X.shape[-1] != model.input_dim:
        raise ShapeError(f"exposures have {X.shape[-1]} columns, model expects {model.input_dim}")


def predict(model: ModelParams, exposures) -> np.ndarray:
    """Raw model output for (..., N, d) exposures."""
    X = np.asarray(exposures, dtype=float)
    _check_dims(model, X)
    if model.arch == LINEAR:
        return X @ model.weights
    W, b1, v, b2 = _unpack(model, X.shape[-1])
    return np.tanh(X @ W + b1) @ v + b2


def _forward(model: ModelParams, X: np.ndarray):
    """Predictions plus whatever the backward pass needs."""
    if model.arch == LINEAR:
        return X @ model.weights, None
    W, b1, v, b2 = _unpack(model, X.shape[-1])
    H = np.tanh(X @ W + b1)
    return H @ v + b2, H


def _backward(model: ModelParams, X: np.ndarray, cache, G: np.ndarray) -> np.ndarray:
    """Map output cotangents to parameter gradients.

    ``X`` is (T, N, d) and ``G`` is (T, N, k): k independent cotangent fields.
    Returns (k, n_params).
    """
    if model.arch == LINEAR:
        return np.einsum("tnd,tnk->kd", X, G)
    d = X.shape[-1]
    W, _, v, _ = _unpack(model, d)
    H = cache
    gv = np.einsum("tnh,tnk->kh", H, G)
    gb2 = G.sum(axis=(0, 1))[:, None]
    # dL/dpre-activation for each field: G[..., k] * v * (1 - H^2)
    D = (1.0 - H**2)[..., None, :] * (G[..., :, None] * v)  # (T, N, k, h)
    gW = np.einsum("tnd,tnkh->kdh", X, D).reshape(G.shape[-1], -1)
    gb1 = D.sum(axis=(0, 1))
    return np.concatenate([gW, gb1, gv, gb2], axis=1)


def _standardize_rows(P: np.ndarray):
    mu = P.mean(axis=-1, keepdims=True)
    C = P - mu
    sd = np.sqrt((C**2).mean(axis=-1, keepdims=True))
    if np.any(sd <= 1e-300) or np.any(sd <= 1e-13 * np.abs(mu)):
        raise DegenerateError("predictions are constant across the cross-section; cannot standardize")
    return C / sd, sd


def multi_label_loss_and_grads(model: ModelParams, exposures, labels, standardize: bool = True):
    """Per-label losses and gradients.

    ``exposures`` is (T, N, d); ``labels`` is (T, N, k).  Each label's loss is the
    period-averaged MSE of the (standardized) prediction.  Returns
    ``(losses (k,), grads (k, n_params))``.
    """
    X = np.asarray(exposures, dtype=float)
    Y = np.asarray(labels, dtype=float)
    if X.ndim == 2:
        X, Y = X[None], Y[None]
    if Y.ndim == 2:
        Y = Y[..., None]
    _check_dims(model, X)
    if Y.shape[:2] != X.shape[:2]:
        raise ShapeError(f"labels {Y.shape[:2]} do not match exposures {X.shape[:2]}")
    T, N = X.shape[:2]
    P, cache = _forward(model, X)
    if standardize:
        S, sd = _standardize_rows(P)
        R = S[..., None] - Y  # (T, N, k)
        losses = (R**2).mean(axis=1).mean(axis=0)
        A = 2.0 * R / N
        # pull back through standardization: (1/sd) (a - mean(a) - S mean(a S))
        A = A - A.mean(axis=1, keepdims=True) - S[..., None] * (A * S[..., None]).mean(axis=1, keepdims=True)
        G = A / sd[..., None] / T
    else:
        R = P[..., None] - Y
        losses = (R**2).mean(axis=1).mean(axis=0)
        G = 2.0 * R / N / T
    return losses, _backward(model, X, cache, G)


def loss_and_grad(model: ModelParams, exposures, labels, standardize: bool = True):
    """Loss and gradient for a single label field; (N, d) or (T, N, d) exposures."""
    losses, grads = multi_label_loss_and_grads(model, exposures, np.asarray(labels, dtype=float)[..., None], standardize)
    return float(losses[0]), grads[0]


def weighted_loss_and_grad(model: ModelParams, exposures, labels, weights, standardize: bool = True):
    """Loss and gradient of sum_k weights[k] * loss_k."""
    losses, grads = multi_label_loss_and_grads(model, exposures, labels, standardize)
    w = np.asarray(weights, dtype=float)
    return float(w @ losses), w @ grads


def ols_fit(exposures, labels) -> ModelParams:
    """Closed-form least squares (no intercept)."""
    S = np.asarray(exposures, dtype=float)
    r = np.asarray(labels, dtype=float).ravel()
    if S.ndim == 3:
        S = S.reshape(-1, S.shape[-1])
    if S.shape[0] != r.size:
        raise ShapeError(f"{S.shape[0]} rows vs {r.size} labels")
    if S.shape[0] <= S.shape[1]:
        raise DegenerateError(f"need more rows than columns, got {S.shape}")
    gram = S.T @ S
    if np.linalg.matrix_rank(gram) < S.shape[1]:
        raise DegenerateError("normal matrix is singular")
    return ModelParams(LINEAR, np.linalg.solve(gram, S.T @ r))


# --------------------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_epochs: int = 100
    patience: int = 5
    batch_periods: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be non-negative")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_periods < 2:
            raise ConfigError("batch_periods must be >= 2")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    init: str = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"

    def as_dict(self) -> dict:
        return {
            "train_loss": [float(x) for x in self.train_loss],
            "val_loss": [float(x) for x in self.val_loss],
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "init": self.init,
        }


def epoch_batches(n_periods: int, batch_periods: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle period indices and cut them into consecutive batches."""
    order = rng.permutation(n_periods)
    return [order[k : k + batch_periods] for k in range(0, n_periods, batch_periods)]


def _check_finite(values, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise TrainingError(f"non-finite {what}")


def train_supervised(
    train_X,
    train_Y,
    val_X,
    val_Y,
    config: TrainConfig,
    arch: str = LINEAR,
    hidden_width: int = DEFAULT_HIDDEN,
    init: ModelParams | None = None,
    standardize: bool = True,
) -> tuple[ModelParams, TrainHistory]:
    """Gradient descent over period batches with early stopping.

    ``train_Y`` / ``val_Y`` are (T, N) labels, or (T, N, k) together with
    uniform task weights (equal-weight multi-task loss).  After each epoch the
    validation loss is computed; training stops after ``patience`` epochs
    without improvement and the best parameters seen are returned.
    """
    X = np.asarray(train_X, dtype=float)
    Y = np.asarray(train_Y, dtype=float)
    VX = np.asarray(val_X, dtype=float)
    VY = np.asarray(val_Y, dtype=float)
    if X.shape[0] == 0 or VX.shape[0] == 0:
        raise ConfigError("training and validation splits must be non-empty")
    if Y.ndim == 2:
        Y, VY = Y[..., None], VY[..., None]
    task_w = np.full(Y.shape[-1], 1.0 / Y.shape[-1])

    model = init if init is not None else init_model(arch, X.shape[-1], config.seed, hidden_width)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(11,)))
    history = TrainHistory()
    best = model
    best_val = math.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        losses = []
        for batch in epoch_batches(X.shape[0], config.batch_periods, rng):
            loss, grad = weighted_loss_and_grad(model, X[batch], Y[batch], task_w, standardize)
            _check_finite(grad, f"gradient at epoch {epoch}")
            losses.append(loss)
            model = model.with_weights(model.weights - config.learning_rate * grad)
        val = float(task_w @ multi_label_loss_and_grads(model, VX, VY, standardize)[0])
        _check_finite(val, f"validation loss at epoch {epoch}")
        history.train_loss.append(float(np.mean(losses)))
        history.val_loss.append(val)
        if val < best_val:
            best_val, best, stale = val, model, 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                history.stopped_early = True
                break
    logger.debug("train_supervised: best epoch %d of %d", history.best_epoch, len(history.val_loss))
    return best, history


# --------------------------------------------------------------------------- persistence


def save_model(model: ModelParams, path) -> None:
    """``arch,hidden_width`` header row, then one weight per line."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([model.arch, model.hidden_width])
        for x in model.weights:
            w.writerow([repr(float(x))])


def load_model(path) -> ModelParams:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != 2:
        raise ShapeError(f"{path}: first row must be 'arch,hidden_width'")
    arch, width = rows[0][0].strip(), int(rows[0][1])
    return ModelParams(arch, np.array([float(r[0]) for r in rows[1:]]), width)
