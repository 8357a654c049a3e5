"""Minibatch training loop, optimizers and the finite-difference gradient check."""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .corpus import DocMatrix
from .model import (
    Gradients,
    ModelParams,
    backward,
    batch_forward_backward,
    cross_entropy,
    forward,
    frozen_forward_loss,
)

OPTIMIZERS = ("adam", "sgd_momentum")


class NumericError(RuntimeError):
    """Training or an optimizer step produced a non-finite value."""


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 100
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True
    early_stop_patience: int | None = 5
    validation_fraction: float = 0.1
    deterministic: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int | None = None
    wall_time_s: float = 0.0
    params_checksum: str = ""


@dataclass
class OptimizerState:
    """Slot variables, one per parameter tensor; also the Adam step counter."""

    t: int = 0
    slots: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, cfg: TrainConfig) -> "OptimizerState":
        names = ("W", "b", "c")
        arrays = (params.W, params.b, params.c)
        slots: dict[str, np.ndarray] = {}
        for name, a in zip(names, arrays):
            slots[f"m_{name}"] = np.zeros_like(a)
            if cfg.optimizer == "adam":
                slots[f"v_{name}"] = np.zeros_like(a)
        return cls(t=0, slots=slots)


def params_checksum(params: ModelParams) -> str:
    digest = hashlib.sha256()
    for a in (params.W, params.b, params.c):
        digest.update(np.ascontiguousarray(a).tobytes())
    return digest.hexdigest()


def optimizer_step(
    params: ModelParams, grads: Gradients, state: OptimizerState, cfg: TrainConfig
) -> OptimizerState:
    """Apply one Adam (bias-corrected) or SGD-with-momentum update in place."""
    state.t += 1
    updates = (("W", params.W, grads.dW), ("b", params.b, grads.db), ("c", params.c, grads.dc))
    lr = cfg.learning_rate
    for name, param, grad in updates:
        grad = grad.astype(param.dtype, copy=False)
        m = state.slots[f"m_{name}"]
        if cfg.optimizer == "adam":
            v = state.slots[f"v_{name}"]
            m += (1.0 - cfg.beta1) * (grad - m)
            v += (1.0 - cfg.beta2) * (grad * grad - v)
            m_hat = m / (1.0 - cfg.beta1 ** state.t)
            v_hat = v / (1.0 - cfg.beta2 ** state.t)
            step = lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        else:
            m *= cfg.momentum
            m += grad
            step = lr * m
        if not np.all(np.isfinite(step)):
            raise NumericError(f"non-finite optimizer update for parameter {name}")
        param -= step
    return state


def _mean_loss(data: DocMatrix, rows: np.ndarray, params: ModelParams, batch: int) -> float:
    """Mean per-document train-mode loss over `rows`, without updating anything."""
    total = 0.0
    for i in range(0, len(rows), batch):
        X = data.dense(rows[i : i + batch], dtype=params.dtype)
        _, loss = batch_forward_backward(X, params)
        total += loss * (min(i + batch, len(rows)) - i)
    return total / len(rows)


def fit(
    data: DocMatrix,
    params: ModelParams,
    cfg: TrainConfig | None = None,
    log_stream: IO[str] | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Train the autoencoder with shuffled minibatches.

    Gradients are averaged over each batch, so the learning rate does not
    depend on batch size; the winner/loser competition is computed per
    sample. When a validation split and a patience are configured, training
    stops after `patience` epochs without improvement and the parameters of
    the best validation epoch are restored. The recorded training loss is
    the running mean per document of the epoch.

    Writes one tab-separated "epoch train_loss val_loss" line per epoch to
    `log_stream` when given.
    """
    cfg = cfg or TrainConfig()
    if data.v != params.v:
        raise ValueError(f"corpus has v={data.v} but model expects v={params.v}")
    rng = np.random.default_rng(cfg.seed)
    rows = np.arange(data.n)
    n_val = int(data.n * cfg.validation_fraction)
    if n_val > 0:
        perm = rng.permutation(data.n)
        val_rows, train_rows = perm[:n_val], perm[n_val:]
    else:
        val_rows, train_rows = rows[:0], rows
    if len(train_rows) == 0:
        raise ValueError("validation split left no training documents")

    state = OptimizerState.for_params(params, cfg)
    report = TrainReport()
    best_val = math.inf
    best_snapshot: ModelParams | None = None
    epochs_since_best = 0
    started = time.perf_counter()

    for epoch in range(cfg.epochs):
        order = rng.permutation(train_rows) if cfg.shuffle else train_rows
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch_rows = order[start : start + cfg.batch_size]
            X = data.dense(batch_rows, dtype=params.dtype)
            grads, loss = batch_forward_backward(X, params)
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            state = optimizer_step(params, grads, state, cfg)
            total += loss * len(batch_rows)
        train_loss = total / len(order)
        report.train_losses.append(train_loss)
        report.epochs_run = epoch + 1

        val_loss = math.nan
        if n_val > 0:
            val_loss = _mean_loss(data, val_rows, params, cfg.batch_size)
            report.val_losses.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_snapshot = params.copy()
                report.best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
        if log_stream is not None:
            log_stream.write(f"{epoch}\t{train_loss:.6f}\t{val_loss:.6f}\n")
            log_stream.flush()
        if (
            cfg.early_stop_patience is not None
            and n_val > 0
            and epochs_since_best > cfg.early_stop_patience
        ):
            break

    if cfg.early_stop_patience is not None and best_snapshot is not None:
        params.W[...] = best_snapshot.W
        params.b[...] = best_snapshot.b
        params.c[...] = best_snapshot.c

    report.wall_time_s = time.perf_counter() - started
    report.params_checksum = params_checksum(params)
    return params, report


def default_k(num_topics: int) -> int:
    """Competition width heuristic: half the topic count, rounded up."""
    if num_topics < 2:
        raise ValueError(f"num_topics must be >= 2, got {num_topics}")
    return -(-num_topics // 2)


def grad_check(
    params: ModelParams,
    x: np.ndarray,
    mode: str = "full",
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    full mode differentiates the real forward and requires variant "none"
    (the competition is piecewise and not differentiable at its selection
    boundaries). frozen_competition mode pins the winner/loser partition and
    the energy from the unperturbed forward, which is the exact surrogate
    the analytic backward pass differentiates. Everything runs in float64.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    if mode not in ("full", "frozen_competition"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "full" and params.variant != "none":
        raise ValueError("full mode requires variant 'none'; use frozen_competition")

    p = params.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    trace = forward(x, p, mode="train")
    grads = backward(trace, p)
    outcome = trace.outcome

    def loss_at() -> float:
        if outcome is None:
            t = forward(x, p, mode="train")
            return cross_entropy(x, t.x_hat)
        return frozen_forward_loss(x, p, outcome)

    worst = 0.0
    for arr, grad in ((p.W, grads.dW), (p.b, grads.db), (p.c, grads.dc)):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            lo_hi = loss_at()
            flat[i] = keep - eps
            lo_lo = loss_at()
            flat[i] = keep
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            analytic = gflat[i]
            denom = max(abs(analytic), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
