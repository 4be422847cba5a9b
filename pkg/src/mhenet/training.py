"""Offline identification of the nominal network and MSE evaluation.

The network is fit by minimizing the open-loop simulation MSE over the
training sequences, with an initial washout segment excluded from the
loss while the recurrent state synchronizes.  Channels are normalized
to zero mean / unit variance on the training split; all reported MSEs
are in normalized units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from . import models
from .models import ModelSpec, ParamVector


@dataclass
class Scaler:
    """Per-channel affine normalization fit on the training split."""

    u_shift: np.ndarray
    u_scale: np.ndarray
    y_shift: np.ndarray
    y_scale: np.ndarray

    def scale_u(self, u):
        return (np.asarray(u, dtype=float) - self.u_shift) / self.u_scale

    def scale_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_shift) / self.y_scale

    def unscale_u(self, u):
        return np.asarray(u, dtype=float) * self.u_scale + self.u_shift

    def unscale_y(self, y):
        return np.asarray(y, dtype=float) * self.y_scale + self.y_shift

    def to_json(self):
        return json.dumps({k: list(getattr(self, k)) for k in
                           ("u_shift", "u_scale", "y_shift", "y_scale")})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(**{k: np.array(v) for k, v in d.items()})


def fit_scaler(sequences) -> Scaler:
    """Mean/std normalization over all samples of the given sequences."""
    U = np.concatenate([s.u for s in sequences], axis=0)
    Y = np.concatenate([s.y for s in sequences], axis=0)
    u_scale, y_scale = U.std(axis=0), Y.std(axis=0)
    if np.any(u_scale <= 0) or np.any(y_scale <= 0):
        raise ValueError("zero-variance channel; cannot normalize")
    return Scaler(U.mean(axis=0), u_scale, Y.mean(axis=0), y_scale)


@dataclass
class TrainConfig:
    epochs: int = 1500
    batch_size: int | None = None      # sequences per step; None = full batch
    learning_rate: float = 1e-2
    lr_decay: float = 1.0              # multiplicative, per epoch
    washout: int = 100                 # steps excluded from the loss
    seed: int = 0
    patience: int = 50                 # early stop after this many stale epochs
    init_scheme: str = "uniform"

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class EvalReport:
    """Per-channel and average MSE in normalized units."""

    channel_mse: np.ndarray
    n_sequences: int
    washout: int

    @property
    def average(self):
        return float(np.mean(self.channel_mse))

    def to_dict(self):
        return {"channel_mse": [float(v) for v in self.channel_mse],
                "average": self.average, "n_sequences": self.n_sequences,
                "washout": self.washout}


def _stack(sequences, scaler):
    """(T, B, n) normalized input/output tensors from a list of sequences."""
    U = np.stack([scaler.scale_u(s.u) for s in sequences], axis=1)
    Y = np.stack([scaler.scale_y(s.y) for s in sequences], axis=1)
    return U, Y


def train_offline(spec: ModelSpec, dataset, config: TrainConfig,
                  scaler: Scaler | None = None, eval_test: bool = False):
    """Adam minimization of the washout-excluded open-loop MSE.

    Rollouts start from the zero model state; the washout absorbs the
    transient.  Returns (best params, history) where history rows are
    (epoch, best-so-far train MSE, test MSE or nan) and the recorded
    train column is non-increasing.
    """
    if scaler is None:
        scaler = fit_scaler(dataset.train)
    U, Y = _stack(dataset.train, scaler)
    T, B = U.shape[0], U.shape[1]
    if config.washout >= T:
        raise ValueError("washout must be shorter than the sequences")
    w = np.zeros(T)
    w[config.washout:] = 1.0
    n_eff = (T - config.washout) * spec.n_y

    params = models.init_params(spec, config.seed, config.init_scheme)
    mask = models.trainable_mask(spec)
    theta = params.values.copy()

    # Adam state over trainable coordinates
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    rng = np.random.default_rng(config.seed + 1)

    best = theta.copy()
    best_mse = np.inf
    history = []
    stale = 0
    batch = config.batch_size or B
    t_adam = 0
    for epoch in range(config.epochs):
        order = rng.permutation(B) if batch < B else np.arange(B)
        epoch_mse = 0.0
        for s in range(0, B, batch):
            idx = order[s:s + batch]
            x0 = models.zero_state(spec, batch=len(idx))
            loss, grad = models.window_loss_and_gradient(
                spec, params.replace_values(theta), x0, U[:, idx], Y[:, idx], step_weights=w)
            scale = 1.0 / (n_eff * len(idx))
            epoch_mse += loss * scale * (len(idx) / B)
            g = grad * scale
            t_adam += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            mhat = m / (1 - beta1 ** t_adam)
            vhat = v / (1 - beta2 ** t_adam)
            theta = theta - mask * lr * mhat / (np.sqrt(vhat) + eps)
        if not np.isfinite(epoch_mse):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        lr *= config.lr_decay
        if epoch_mse < best_mse * (1 - 1e-6):
            best_mse, best, stale = epoch_mse, theta.copy(), 0
        else:
            stale += 1
        test_mse = np.nan
        if eval_test and (epoch % 25 == 0 or stale >= config.patience):
            rep = evaluate_mse(spec, params.replace_values(best), dataset.test,
                               config.washout, scaler)
            test_mse = rep.average
        history.append((epoch, best_mse, test_mse))
        if stale >= config.patience:
            break
    return params.replace_values(best), history


def evaluate_mse(spec: ModelSpec, params: ParamVector, sequences, washout: int,
                 scaler: Scaler) -> EvalReport:
    """Open-loop prediction MSE per channel, post-washout, normalized units."""
    if not sequences:
        raise ValueError("no sequences to evaluate")
    U, Y = _stack(sequences, scaler)
    if washout >= U.shape[0]:
        raise ValueError("washout must be shorter than the sequences")
    x0 = models.zero_state(spec, batch=U.shape[1])
    pred, _ = models.simulate(spec, params, x0, U)
    err = (pred - Y)[washout:]
    mse = np.mean(err * err, axis=(0, 1))
    return EvalReport(channel_mse=mse, n_sequences=U.shape[1], washout=washout)
