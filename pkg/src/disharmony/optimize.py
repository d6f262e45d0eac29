"""Adam, cyclic cosine learning rate, and the mini-batch epoch driver."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .data import Dataset
from .model import ParamSet, make_rng


class NumericError(FloatingPointError):
    """Non-finite loss or gradient during training."""


@dataclass
class OptimState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, **kw) -> "OptimState":
        return cls(np.zeros(n), np.zeros(n), 0, **kw)

    def copy(self) -> "OptimState":
        return replace(self, m=self.m.copy(), v=self.v.copy())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 6
    epochs: int = 60
    cycles: int = 3
    lr_min: float = 1e-6
    seed: int = 0
    augment_sd: float = 0.0

    def __post_init__(self):
        if self.lr <= 0 or self.lr_min < 0 or self.lr_min > self.lr:
            raise ValueError("need 0 <= lr_min <= lr and lr > 0")
        if self.weight_decay < 0 or self.augment_sd < 0:
            raise ValueError("weight_decay and augment_sd must be nonnegative")
        if self.batch_size <= 0 or self.epochs <= 0 or self.cycles <= 0:
            raise ValueError("batch_size, epochs and cycles must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Batch:
    data: Dataset
    indices: np.ndarray
    epoch: int
    number: int
    seed: int

    def rng(self, *stream) -> np.random.Generator:
        return make_rng(self.seed, *stream, self.epoch, self.number)


def adam_step(params: ParamSet, grad, state: OptimState, lr: float):
    """One Adam update on all coordinates; returns new ``(params, state)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape or state.m.shape != grad.shape:
        raise ValueError("gradient / state length mismatch")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient entries")
    values = params.values.copy()
    new = state.copy()
    new.t += 1
    idx = np.arange(values.size)
    _kernels.adam_update(values, new.m, new.v, grad, idx, new.t, lr,
                         new.beta1, new.beta2, new.eps)
    return params.with_values(values), new


def cyclic_cosine_lr(config: TrainConfig, epoch: int) -> float:
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    L = math.ceil(config.epochs / config.cycles)
    p = (epoch % L) / L
    return config.lr_min + 0.5 * (config.lr - config.lr_min) * (1.0 + math.cos(math.pi * p))


def shuffled(n: int, seed: int, epoch: int) -> np.ndarray:
    return make_rng(seed, "shuffle", epoch).permutation(n)


def train_epoch(params: ParamSet, dataset: Dataset, objective_builder, segments,
                config: TrainConfig, state: OptimState, epoch: int):
    """One pass of seeded mini-batch Adam.

    ``objective_builder(batch)`` returns a closure ``values -> (loss, grad)``.
    Only coordinates of ``segments`` are read from the gradient and updated.
    Returns ``(params, state, mean batch loss)``.
    """
    n = len(dataset)
    lr = cyclic_cosine_lr(config, epoch)
    idx = params.index(segments)
    values = params.values.copy()
    state = state.copy()
    order = shuffled(n, config.seed, epoch)
    losses = []
    for number, start in enumerate(range(0, n, config.batch_size)):
        batch = Batch(dataset, order[start:start + config.batch_size], epoch, number, config.seed)
        loss, g = objective_builder(batch)(values)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss} at epoch {epoch}, batch {number}")
        gi = g[idx]
        if not np.all(np.isfinite(gi)):
            raise NumericError(f"non-finite gradient at epoch {epoch}, batch {number}")
        state.t += 1
        _kernels.adam_update(values, state.m, state.v, g, idx, state.t, lr,
                             state.beta1, state.beta2, state.eps)
        losses.append(loss)
    return params.with_values(values), state, float(np.mean(losses))


def fit(params: ParamSet, dataset: Dataset, objective_builder, segments,
        config: TrainConfig):
    """Run ``config.epochs`` epochs from a fresh optimizer state."""
    state = OptimState.fresh(params.values.size)
    history = []
    for epoch in range(config.epochs):
        params, state, loss = train_epoch(params, dataset, objective_builder, segments,
                                          config, state, epoch)
        history.append(loss)
    return params, history
