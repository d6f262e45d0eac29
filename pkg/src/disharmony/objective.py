"""Composite training objectives: weighted head losses plus quadratic penalties.

An :class:`Objective` evaluates through the fused kernels for training and
can rebuild the identical expression on the autodiff tape for checking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import autodiff as ad
from .data import Dataset
from .losses import proximal_penalty, weight_decay
from .model import BASE, ModelConfig, ParamSet, dropout_masks, forward_var, head_rows


@dataclass(frozen=True)
class HeadTerm:
    head: str  # "primary" or an aux task id
    weight: float
    loss: str = "cross_entropy"
    delta: float = 1.0

    def targets(self, data: Dataset, idx) -> np.ndarray:
        col = data.require_primary() if self.head == "primary" else data.require_aux(self.head)
        return np.asarray(col[idx], dtype=np.float64)


@dataclass(frozen=True)
class Penalty:
    """``(strength / 2) * ||theta_S - anchor_S||^2``; ``anchor=None`` means weight decay."""

    segments: tuple
    strength: float
    anchor: np.ndarray | None = None


class Objective:
    def __init__(self, config: ModelConfig, layout_params: ParamSet, heads, penalties=()):
        self.config = config
        self.heads = tuple(heads)
        self.penalties = tuple(p for p in penalties)
        p = layout_params
        self._ext = p.layer_rows(BASE)
        rows = [head_rows(p, h.head) for h in self.heads]
        self._head_table = np.concatenate(rows) if rows else np.zeros((0, 5), dtype=np.int64)
        self._head_ptr = np.cumsum([0] + [len(r) for r in rows]).astype(np.int64)
        self._kind = np.array([_kernels.CE if h.loss == "cross_entropy" else _kernels.HUBER
                               for h in self.heads], dtype=np.int64)
        self._weight = np.array([h.weight for h in self.heads], dtype=np.float64)
        self._delta = np.array([h.delta for h in self.heads], dtype=np.float64)
        self._pen_idx = [p.index(pen.segments) for pen in self.penalties]
        self._layout = p

    # batch materialization ---------------------------------------------
    def batch_arrays(self, batch, train: bool = True, augment_sd: float = 0.0):
        data, idx = batch.data, batch.indices
        X = data.features[idx]
        if augment_sd > 0.0:
            X = X + augment_sd * batch.rng("augment").standard_normal(X.shape)
        T = np.stack([h.targets(data, idx) for h in self.heads]) if self.heads else np.zeros((0, len(idx)))
        f = self.config.feature_dim
        if train and self.config.dropout_rate > 0.0:
            masks = np.stack([dropout_masks(self.config, 1, len(idx), batch.rng("dropout", h.head))[0]
                              for h in self.heads]) if self.heads else np.ones((0, len(idx), f))
        else:
            masks = np.ones((len(self.heads), len(idx), f))
        return X, T, masks

    # evaluation ----------------------------------------------------------
    def value_and_grad(self, values, X, T, masks):
        loss, g = _kernels.net_loss_grad(values, self._ext, self._head_table, self._head_ptr,
                                         self._kind, self._weight, self._delta, X, T, masks)
        for pen, idx in zip(self.penalties, self._pen_idx):
            diff = values[idx] if pen.anchor is None else values[idx] - pen.anchor[idx]
            loss += 0.5 * pen.strength * float(diff @ diff)
            g[idx] += pen.strength * diff
        return loss, g

    def tape_loss(self, w: ad.Var, X, T, masks) -> ad.Var:
        total = ad.Var(0.0)
        for k, h in enumerate(self.heads):
            out = forward_var(w, self._layout, X, h.head, masks[k])
            if h.loss == "cross_entropy":
                rows = ad.cross_entropy_rows(out, T[k].astype(np.int64))
            else:
                rows = ad.huber_rows(out[:, 0], T[k], h.delta)
            total = total + ad.mean(rows) * h.weight
        for pen, idx in zip(self.penalties, self._pen_idx):
            theta = w[idx]
            if pen.anchor is None:
                total = total + weight_decay(theta, pen.strength)
            else:
                total = total + proximal_penalty(theta, pen.anchor[idx], pen.strength)
        return total

    def builder(self, train_config):
        """Objective builder for :func:`optimize.train_epoch`."""
        sd = train_config.augment_sd

        def build(batch):
            X, T, masks = self.batch_arrays(batch, train=True, augment_sd=sd)
            return lambda values: self.value_and_grad(values, X, T, masks)

        return build
