"""Pretraining, proximal fine-tuning, and the auxiliary-task adaptation phases."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import DataError, Dataset
from .losses import softmax
from .model import (BASE, MAIN, AuxTaskSpec, ModelConfig, ParamSet, aux_segment,
                    forward_batch, init_params)
from .objective import HeadTerm, Objective, Penalty
from .optimize import TrainConfig, fit

INTRA_ALPHA = 0.01
INTRA_LAMBDA = 0.1
INTER_ALPHA = 0.5


@dataclass(frozen=True)
class AdaptConfig:
    alpha: float = INTRA_ALPHA
    lambda_wd: float = INTRA_LAMBDA
    penalized_segments: Optional[tuple] = None
    frozen_segments: tuple = ()

    def __post_init__(self):
        if self.alpha < 0 or self.lambda_wd < 0:
            raise ValueError("alpha and lambda_wd must be nonnegative")
        if self.penalized_segments is not None:
            object.__setattr__(self, "penalized_segments", tuple(self.penalized_segments))
            overlap = set(self.penalized_segments) & set(self.frozen_segments)
            if overlap:
                raise ValueError(f"segments both penalized and frozen: {sorted(overlap)}")
        object.__setattr__(self, "frozen_segments", tuple(self.frozen_segments))

    @classmethod
    def inter(cls, alpha: float = INTER_ALPHA, **kw) -> "AdaptConfig":
        return cls(alpha=alpha, lambda_wd=0.0, **kw)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "lambda_wd": self.lambda_wd,
                "penalized_segments": None if self.penalized_segments is None else list(self.penalized_segments),
                "frozen_segments": list(self.frozen_segments)}


@dataclass
class PipelineArtifacts:
    pretrained: ParamSet
    adapted_base: ParamSet
    adapted_main: ParamSet
    provenance: dict = field(default_factory=dict)


def config_hash(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _trainable(params: ParamSet, wanted, adapt: AdaptConfig):
    overlap = set(wanted) & set(adapt.frozen_segments)
    if overlap:
        raise ValueError(f"segments both trainable and frozen: {sorted(overlap)}")
    return tuple(s for s in params.segments if s in set(wanted))


def _primary_term():
    return HeadTerm("primary", 1.0)


def _aux_term(task: AuxTaskSpec, weight: float) -> HeadTerm:
    return HeadTerm(task.task_id, weight, task.loss, task.delta)


def train_erm(data: Dataset, model: ModelConfig, train: TrainConfig,
              init: Optional[ParamSet] = None, weight_decay: Optional[float] = None) -> ParamSet:
    """Regularized cross-entropy ERM on the primary task over all segments."""
    data.require_primary()
    params = init if init is not None else init_params(model, [], train.seed)
    lam = train.weight_decay if weight_decay is None else weight_decay
    segs = tuple(params.segments)
    obj = Objective(model, params, [_primary_term()], [Penalty(segs, lam)])
    params, _ = fit(params, data, obj.builder(train), segs, train)
    return params


def pretrain(source: Dataset, model: ModelConfig, aux: list, train: TrainConfig) -> ParamSet:
    """Joint primary + auxiliary training on the source study.

    Objective: mean CE + sum_a (beta_a / |A|) mean loss_a + weight decay.
    """
    if not aux:
        raise ValueError("pretrain needs at least one auxiliary task")
    source.require_primary()
    for t in aux:
        source.require_aux(t.task_id)
    params = init_params(model, aux, train.seed)
    heads = [_primary_term()] + [_aux_term(t, t.beta / len(aux)) for t in aux]
    segs = tuple(params.segments)
    obj = Objective(model, params, heads, [Penalty(segs, train.weight_decay)])
    params, _ = fit(params, source, obj.builder(train), segs, train)
    return params


def finetune_subgroup(pretrained: ParamSet, subgroup: Dataset, model: ModelConfig,
                      adapt: AdaptConfig, train: TrainConfig) -> ParamSet:
    """Sub-group CE + (alpha/2)||theta - theta_hat||^2 (+ lambda_wd decay)."""
    if len(subgroup) == 0:
        raise DataError("empty subgroup")
    subgroup.require_primary()
    segs = _trainable(pretrained, [s for s in pretrained.segments if s not in adapt.frozen_segments], adapt)
    penalized = adapt.penalized_segments or segs
    pens = [Penalty(segs, adapt.lambda_wd), Penalty(penalized, adapt.alpha, pretrained.values.copy())]
    obj = Objective(model, pretrained, [_primary_term()], pens)
    params, _ = fit(pretrained.copy(), subgroup, obj.builder(train), segs, train)
    return params


def adapt_features(pretrained: ParamSet, target: Dataset, model: ModelConfig, aux: list,
                   adapt: AdaptConfig, train: TrainConfig) -> ParamSet:
    """Fit extractor and aux heads to target aux labels; extractor is anchored.

    Never reads the target primary column. ``phi_main`` is left untouched.
    """
    if not aux:
        raise ValueError("adaptation needs at least one auxiliary task")
    for t in aux:
        target.require_aux(t.task_id)
    segs = _trainable(pretrained, [BASE] + [aux_segment(t.task_id) for t in aux], adapt)
    penalized = adapt.penalized_segments or (BASE,)
    heads = [_aux_term(t, 1.0 / len(aux)) for t in aux]
    obj = Objective(model, pretrained, heads, [Penalty(penalized, adapt.alpha, pretrained.values.copy())])
    params, _ = fit(pretrained.copy(), target, obj.builder(train), segs, train)
    return params


def adapt_primary(pretrained: ParamSet, adapted: ParamSet, source: Dataset, model: ModelConfig,
                  adapt: AdaptConfig, train: TrainConfig) -> ParamSet:
    """Refit the primary head on source data through the adapted, frozen extractor."""
    if adapted.layout != pretrained.layout:
        raise ValueError("adapted and pretrained layouts differ")
    source.require_primary()
    segs = _trainable(adapted, [MAIN], adapt)
    penalized = adapt.penalized_segments or (MAIN,)
    obj = Objective(model, adapted, [_primary_term()],
                    [Penalty(penalized, adapt.alpha, pretrained.values.copy())])
    params, _ = fit(adapted.copy(), source, obj.builder(train), segs, train)
    return params


def run_pipeline(source: Dataset, target: Dataset, model: ModelConfig, aux: list,
                 adapt: AdaptConfig, train: TrainConfig,
                 seeds: tuple = (0, 1, 2)) -> PipelineArtifacts:
    """Pretrain on source, adapt the extractor on target aux labels, refit the head."""
    t1, t2, t3 = (replace(train, seed=s) for s in seeds)
    pre = pretrain(source, model, aux, t1)
    base = adapt_features(pre, target, model, aux, adapt, t2)
    main = adapt_primary(pre, base, source, model, adapt, t3)
    prov = {
        "model": model.to_dict(),
        "aux": [t.to_dict() for t in aux],
        "adapt": adapt.to_dict(),
        "phases": [
            {"phase": "pretrain", "train": t1.to_dict(), "data": source.site_id},
            {"phase": "adapt_features", "train": t2.to_dict(), "data": target.site_id},
            {"phase": "adapt_primary", "train": t3.to_dict(), "data": source.site_id},
        ],
    }
    prov["config_hash"] = config_hash(prov)
    return PipelineArtifacts(pre, base, main, prov)


def predict_proba(params: ParamSet, model: ModelConfig, X) -> np.ndarray:
    return softmax(forward_batch(params, model, X, "primary"))


def infer(params: ParamSet, model: ModelConfig, x):
    """Eval-mode prediction for one input: ``(class, probabilities)``.

    Ties go to the lowest class index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ValueError(f"expected a vector of length {model.input_dim}")
    probs = predict_proba(params, model, x[None, :])[0]
    return int(np.argmax(probs)), probs


def evaluate(params: ParamSet, model: ModelConfig, data: Dataset) -> float:
    y = data.require_primary()
    if len(data) == 0:
        raise DataError("cannot evaluate on empty data")
    logits = forward_batch(params, model, data.features, "primary")
    return float(np.mean(np.argmax(logits, axis=1) == y))
