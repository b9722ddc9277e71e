"""Adaptive horizon learning: softmax horizon weights tuned by a one-step hypergradient.

Per batch of periods (split into support and query halves):

1. per-horizon gradients ``g_k`` of the standardized MSE at ``theta0`` on the support half;
2. look-ahead ``theta1 = theta0 - eta * sum_k lambda_k g_k``;
3. query gradient ``q = grad L_target(theta1)``; then ``dL/dlambda_k = -eta <q, g_k>``
   exactly, because ``theta1`` is affine in ``lambda``;
4. logits ``-= beta * (J_softmax^T dL/dlambda - gamma * dH/dlogits)``;
5. the real update ``theta0 - eta * sum_k lambda_k g_k`` with the *new* lambda
   (the look-ahead state is discarded).

Losses are averaged over the periods of a batch, so ``eta`` does not depend on
the batch size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateError, DomainError, TrainingError
from .forecaster import (
    DEFAULT_HIDDEN,
    LINEAR,
    ModelParams,
    TrainConfig,
    epoch_batches,
    init_model,
    multi_label_loss_and_grads,
    train_supervised,
)
from .metrics import standardize_cross_section

logger = logging.getLogger(__name__)

# The reference inner step of 1e-6 is tuned to raw deep-network gradients; with
# per-period averaged losses on a linear model the same role is played by a
# step 5e4 times larger.
REFERENCE_INNER_LR = 1e-6
SYNTHETIC_LR_FACTOR = 5e4


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True)
class HorizonWeights:
    """Softmax-parameterized weights over candidate horizons."""

    logits: np.ndarray

    def __post_init__(self):
        z = np.array(self.logits, dtype=float).reshape(-1)
        if z.size == 0 or not np.all(np.isfinite(z)):
            raise DomainError("logits must be a non-empty finite vector")
        z.setflags(write=False)
        object.__setattr__(self, "logits", z)

    @classmethod
    def uniform(cls, k: int) -> "HorizonWeights":
        return cls(np.zeros(k))

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits)

    def argmax(self) -> int:
        """Index of the largest weight; ties go to the smallest index."""
        return int(np.argmax(self.weights))

    def __len__(self) -> int:
        return self.logits.size


@dataclass(frozen=True)
class BilevelConfig:
    """Hyperparameters of the adaptive learner.

    ``inner_lr`` is the theta step of the warm-up, the look-ahead and the real
    update (default ``REFERENCE_INNER_LR * SYNTHETIC_LR_FACTOR``).  Only a
    single inner step is supported.
    """

    inner_lr: float = REFERENCE_INNER_LR * SYNTHETIC_LR_FACTOR
    outer_lr: float = 1e-3
    entropy_weight: float = 1e-3
    inner_steps: int = 1
    warmup_epochs: int = 3
    epochs: int = 20
    batch_periods: int = 20
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.inner_steps != 1:
            raise ConfigError("only inner_steps == 1 is supported (the hypergradient is exact for one step)")
        if not self.inner_lr > 0 or not self.outer_lr > 0:
            raise ConfigError("learning rates must be positive")
        if self.entropy_weight < 0:
            raise ConfigError("entropy_weight must be non-negative")
        if self.warmup_epochs < 0 or self.epochs < 1:
            raise ConfigError("warmup_epochs must be >= 0 and epochs >= 1")
        if self.batch_periods < 2 or self.batch_periods % 2:
            raise ConfigError("batch_periods must be an even number >= 2")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")


@dataclass(frozen=True)
class BatchSplit:
    support: np.ndarray
    query: np.ndarray


def split_batch(period_indices, seed) -> BatchSplit:
    """Uniformly random equal partition of an even-sized batch."""
    idx = np.asarray(period_indices)
    if idx.size == 0 or idx.size % 2:
        raise DomainError(f"batch must have an even, non-zero number of periods, got {idx.size}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(idx.size)
    half = idx.size // 2
    return BatchSplit(idx[np.sort(perm[:half])], idx[np.sort(perm[half:])])


def standardized_labels(returns, candidates) -> np.ndarray:
    """(T, N, Delta) raw returns -> (T, N, k) standardized labels for 1-based ``candidates``."""
    r = np.asarray(returns, dtype=float)
    cols = np.asarray(candidates, dtype=int) - 1
    z = r[..., cols]
    try:
        return standardize_cross_section(z, axis=1)
    except DegenerateError:
        sd = z.std(axis=1)
        t, k = np.argwhere(sd == 0)[0]
        raise DegenerateError(f"horizon {candidates[k]} has a constant cross-section in period {t}") from None


def warmup_target(returns_slice, candidates=None) -> np.ndarray:
    """Mean of the standardized candidate labels for one period ((N, Delta) input)."""
    r = np.asarray(returns_slice, dtype=float)
    if candidates is None:
        candidates = np.arange(1, r.shape[-1] + 1)
    cols = np.asarray(candidates, dtype=int) - 1
    out = np.zeros(r.shape[:-1])
    for c in cols:
        try:
            out = out + standardize_cross_section(r[..., c], axis=-1)
        except DegenerateError:
            raise DegenerateError(f"horizon {c + 1} has a constant cross-section") from None
    return out / cols.size


def inner_loss_and_grads(model: ModelParams, lam: HorizonWeights, X, Z):
    """Weighted inner loss over candidates.

    ``Z`` is (T, N, k) standardized labels.  Returns ``(loss, grad_theta, per_horizon_grads)``
    with ``per_horizon_grads`` of shape (k, n_params).
    """
    losses, grads = multi_label_loss_and_grads(model, X, Z)
    w = lam.weights
    if w.size != grads.shape[0]:
        raise DomainError(f"{w.size} weights for {grads.shape[0]} candidate labels")
    return float(w @ losses), w @ grads, grads


def lookahead(model: ModelParams, lam: HorizonWeights, eta: float, X, Z) -> ModelParams:
    _, g, _ = inner_loss_and_grads(model, lam, X, Z)
    return model.with_weights(model.weights - eta * g)


def entropy_and_grad(lam: HorizonWeights):
    """Entropy of lambda and its gradient with respect to the logits."""
    w = lam.weights
    logw = np.log(np.maximum(w, 1e-300))
    H = float(-(w * logw).sum())
    return H, -w * (logw + H)


def softmax_pullback(weights, grad_weights) -> np.ndarray:
    """Chain a gradient w.r.t. the simplex weights to the logits."""
    g = np.asarray(grad_weights, dtype=float)
    return weights * (g - weights @ g)


def hypergradient(model: ModelParams, lam: HorizonWeights, eta: float, support, query, per_horizon=None):
    """Gradient of the query loss after one look-ahead step, w.r.t. the logits.

    ``support = (X_s, Z_s)`` with (T, N, k) candidate labels; ``query = (X_q, z_q)``
    with (T, N) target labels.  Returns ``(grad_logits, grad_lambda, outer_loss)``.
    """
    Xs, Zs = support
    Xq, zq = query
    if per_horizon is None:
        _, _, per_horizon = inner_loss_and_grads(model, lam, Xs, Zs)
    w = lam.weights
    theta1 = model.with_weights(model.weights - eta * (w @ per_horizon))
    losses, gq = multi_label_loss_and_grads(theta1, Xq, np.asarray(zq)[..., None])
    grad_lambda = -eta * (per_horizon @ gq[0])
    return softmax_pullback(w, grad_lambda), grad_lambda, float(losses[0])


def warmup_config(config: BilevelConfig, train_config: TrainConfig) -> TrainConfig:
    """Training config of phase 1: the inner step size and batch size, ``warmup_epochs`` epochs.

    Using ``inner_lr`` keeps a single theta step size across both phases.
    """
    return replace(
        train_config,
        learning_rate=config.inner_lr,
        batch_periods=config.batch_periods,
        max_epochs=max(config.warmup_epochs, 1),
    )


@dataclass
class AdaptiveResult:
    model: ModelParams
    lam: HorizonWeights
    trajectory: list = field(default_factory=list)  # (step, H, weights)
    history: dict = field(default_factory=dict)

    def argmax_horizon(self, candidates) -> int:
        return int(np.asarray(candidates)[self.lam.argmax()])


def train_adaptive(
    train_X,
    train_R,
    val_X,
    val_R,
    candidates,
    target: int,
    config: BilevelConfig,
    train_config: TrainConfig,
    arch: str = LINEAR,
    hidden_width: int = DEFAULT_HIDDEN,
) -> AdaptiveResult:
    """Warm-up on the mean standardized label, then alternate outer (lambda) and inner (theta) steps.

    ``train_R`` / ``val_R`` are raw (T, N, Delta) returns; ``candidates`` are
    1-based horizons; ``target`` is the inference horizon.

    Phase 1 is exactly :func:`train_supervised` on the warm-up target with
    :func:`warmup_config`.  Phase 2 early-stops on the target validation loss
    and restores the checkpoint with the best validation loss; theta and lambda
    both come from that epoch, while ``trajectory`` records every step and
    ``history["final_weights"]`` the last lambda.  With a single candidate
    lambda cannot move and the call reduces to :func:`train_supervised` on that
    label with ``train_config``.
    """
    candidates = [int(c) for c in candidates]
    if not candidates:
        raise DomainError("need at least one candidate horizon")
    X = np.asarray(train_X, dtype=float)
    VX = np.asarray(val_X, dtype=float)
    delta_max = np.asarray(train_R).shape[-1]
    if not 1 <= target <= delta_max or any(not 1 <= c <= delta_max for c in candidates):
        raise DomainError(f"target and candidates must lie in 1..{delta_max}")
    Z = standardized_labels(train_R, candidates)
    zt = standardized_labels(train_R, [target])[..., 0]
    vzt = standardized_labels(val_R, [target])[..., 0]

    if len(candidates) == 1:
        # lambda is pinned to [1]: the method is supervised training on that label
        vz = standardized_labels(val_R, candidates)[..., 0]
        model, hist = train_supervised(X, Z[..., 0], VX, vz, train_config, arch, hidden_width)
        lam = HorizonWeights.uniform(1)
        history = {"warmup": None, "single_candidate": hist.as_dict(), "best_epoch": hist.best_epoch,
                   "final_weights": [1.0]}
        return AdaptiveResult(model, lam, [(0, 0.0, lam.weights.copy())], history)

    model = init_model(arch, X.shape[-1], train_config.seed, hidden_width)
    warm_hist = None
    if config.warmup_epochs > 0:
        warm_cfg = warmup_config(config, train_config)
        ybar = Z.mean(axis=-1)
        vbar = standardized_labels(val_R, candidates).mean(axis=-1)
        model, warm_hist = train_supervised(X, ybar, VX, vbar, warm_cfg, arch, hidden_width, init=model)

    lam = HorizonWeights.uniform(len(candidates))
    eta, beta, gamma = config.inner_lr, config.outer_lr, config.entropy_weight
    trajectory = [(0, entropy_and_grad(lam)[0], lam.weights.copy())]
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(13,)))
    best_val = math.inf
    best_model, best_lam = model, lam
    stale = 0
    history = {"warmup": warm_hist.as_dict() if warm_hist else None, "val_loss": [], "outer_loss": [],
               "best_epoch": 0, "theta_update": "theta0 re-stepped on support with post-update lambda"}
    step = 0
    for epoch in range(1, config.epochs + 1):
        outer = []
        for batch in epoch_batches(X.shape[0], config.batch_periods, rng):
            if batch.size % 2:
                batch = batch[:-1]
            if batch.size < 2:
                continue
            split = split_batch(batch, rng.integers(2**63))
            Xs, Zs = X[split.support], Z[split.support]
            _, _, per_h = inner_loss_and_grads(model, lam, Xs, Zs)
            g_logits, _, out_loss = hypergradient(model, lam, eta, (Xs, Zs), (X[split.query], zt[split.query]), per_h)
            _, g_entropy = entropy_and_grad(lam)
            update = g_logits - gamma * g_entropy
            if not np.all(np.isfinite(update)) or not np.all(np.isfinite(per_h)):
                raise TrainingError(f"non-finite gradient at epoch {epoch}, step {step + 1}: "
                                    f"logits={lam.logits.tolist()}, outer_loss={out_loss}")
            lam = HorizonWeights(lam.logits - beta * update)
            w = lam.weights
            if not (np.all(w > 0) and abs(w.sum() - 1) <= 1e-12):
                raise TrainingError("horizon weights left the simplex")
            model = model.with_weights(model.weights - eta * (w @ per_h))
            step += 1
            trajectory.append((step, entropy_and_grad(lam)[0], w.copy()))
            outer.append(out_loss)
        val = float(multi_label_loss_and_grads(model, VX, vzt[..., None])[0][0])
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history["val_loss"].append(val)
        history["outer_loss"].append(float(np.mean(outer)) if outer else float("nan"))
        if val < best_val:
            best_val, best_model, best_lam, stale = val, model, lam, 0
            history["best_epoch"] = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    history["final_weights"] = lam.weights.tolist()
    return AdaptiveResult(best_model, best_lam, trajectory, history)
