"""MLP with named parameter segments: shared extractor, primary head, aux heads."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from . import autodiff as ad

BASE = "theta_base"
MAIN = "phi_main"
AUX_PREFIX = "phi_aux:"


def aux_segment(task_id: str) -> str:
    return AUX_PREFIX + task_id


def stream_key(*parts) -> list[int]:
    """Stable integer key for seeding, from ints and strings."""
    out = []
    for p in parts:
        if isinstance(p, str):
            out.append(zlib.crc32(p.encode()))
        else:
            out.append(int(p) & 0xFFFFFFFF)
    return out


def make_rng(seed: int, *parts) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, *parts)``."""
    ss = np.random.SeedSequence(stream_key(seed, *parts))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    extractor_widths: tuple = (32,)
    head_widths: tuple = (64, 16)
    dropout_rate: float = 0.5
    num_primary_classes: int = 2
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "extractor_widths", tuple(int(w) for w in self.extractor_widths))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if self.input_dim <= 0:
            raise ValueError("input_dim must be positive")
        if any(w <= 0 for w in self.extractor_widths + self.head_widths):
            raise ValueError("layer widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.num_primary_classes < 2:
            raise ValueError("need at least two primary classes")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def feature_dim(self) -> int:
        return self.extractor_widths[-1] if self.extractor_widths else self.input_dim

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "extractor_widths": list(self.extractor_widths),
            "head_widths": list(self.head_widths),
            "dropout_rate": self.dropout_rate,
            "num_primary_classes": self.num_primary_classes,
            "activation": self.activation,
        }


@dataclass(frozen=True)
class AuxTaskSpec:
    task_id: str
    kind: str = "classification"
    n_classes: int = 2
    loss: Optional[str] = None
    beta: Optional[float] = None
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("classification", "regression"):
            raise ValueError(f"unknown aux kind {self.kind!r}")
        loss = self.loss or ("cross_entropy" if self.kind == "classification" else "huber")
        if (self.kind, loss) not in (("classification", "cross_entropy"), ("regression", "huber")):
            raise ValueError("classification tasks use cross_entropy, regression tasks use huber")
        object.__setattr__(self, "loss", loss)
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 if loss == "cross_entropy" else 0.1)
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.delta <= 0:
            raise ValueError("huber delta must be positive")
        if self.kind == "classification" and self.n_classes < 2:
            raise ValueError("classification aux task needs n_classes >= 2")

    @property
    def out_dim(self) -> int:
        return self.n_classes if self.kind == "classification" else 1

    def with_beta(self, beta: float) -> "AuxTaskSpec":
        return AuxTaskSpec(self.task_id, self.kind, self.n_classes, self.loss, beta, self.delta)

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "kind": self.kind, "n_classes": self.n_classes,
                "loss": self.loss, "beta": self.beta, "delta": self.delta}


@dataclass
class ParamSet:
    """Flat weight vector plus ``layout``: ``((segment, ((layer, shape), ...)), ...)``."""

    values: np.ndarray
    layout: tuple
    seed: int = 0
    _offsets: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        names = [name for name, _ in self.layout]
        if len(set(names)) != len(names):
            raise ValueError("duplicate segment names in layout")
        offsets, pos = {}, 0
        for name, layers in self.layout:
            start = pos
            for _, shape in layers:
                pos += int(np.prod(shape))
            offsets[name] = (start, pos)
        if pos != self.values.size:
            raise ValueError(f"layout expects {pos} values, got {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite parameter values")
        self._offsets = offsets

    @property
    def segments(self) -> list[str]:
        return [name for name, _ in self.layout]

    def segment_slice(self, name: str) -> slice:
        try:
            lo, hi = self._offsets[name]
        except KeyError:
            raise KeyError(f"no segment {name!r} in layout") from None
        return slice(lo, hi)

    def segment(self, name: str) -> np.ndarray:
        return self.values[self.segment_slice(name)]

    def index(self, segments) -> np.ndarray:
        """Integer positions covered by ``segments`` (in layout order)."""
        parts = [np.arange(*self._offsets[s]) for s in self.segments if s in set(segments)]
        missing = set(segments) - set(self.segments)
        if missing:
            raise KeyError(f"unknown segments {sorted(missing)}")
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def copy(self) -> "ParamSet":
        return ParamSet(self.values.copy(), self.layout, self.seed)

    def with_values(self, values) -> "ParamSet":
        return ParamSet(np.array(values, dtype=np.float64), self.layout, self.seed)

    def replace_segment(self, name: str, values) -> "ParamSet":
        out = self.copy()
        out.values[out.segment_slice(name)] = values
        return out

    def layer_rows(self, name: str) -> np.ndarray:
        """Kernel table rows for one segment's dense layers."""
        lo, _ = self._offsets[name]
        layers = dict(self.layout)[name]
        rows, pos = [], lo
        for k in range(0, len(layers), 2):
            (_, wshape), (_, bshape) = layers[k], layers[k + 1]
            nin, nout = wshape
            rows.append((pos, pos + nin * nout, nin, nout, 1))
            pos += nin * nout + bshape[0]
        return np.array(rows, dtype=np.int64).reshape(-1, 5)


def _dense_shapes(prefix, dims):
    shapes = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        shapes.append((f"{prefix}{i}.W", (a, b)))
        shapes.append((f"{prefix}{i}.b", (b,)))
    return tuple(shapes)


def build_layout(config: ModelConfig, aux: list) -> tuple:
    ids = [t.task_id for t in aux]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate aux task ids")
    f = config.feature_dim
    layout = [(BASE, _dense_shapes("ext", (config.input_dim,) + config.extractor_widths)),
              (MAIN, _dense_shapes("head", (f,) + config.head_widths + (config.num_primary_classes,)))]
    for t in aux:
        layout.append((aux_segment(t.task_id),
                       _dense_shapes("head", (f,) + config.head_widths + (t.out_dim,))))
    return tuple(layout)


def init_params(config: ModelConfig, aux: list, seed: int) -> ParamSet:
    """He-style uniform weights (bound ``gain * sqrt(3 / fan_in)``), zero biases.

    Every segment draws from its own stream keyed on ``(seed, segment)`` so
    adding or removing aux heads never changes the other segments.
    """
    layout = build_layout(config, aux)
    chunks = []
    for name, layers in layout:
        rng = make_rng(seed, "init", name)
        n_dense = len(layers) // 2
        for k, (lname, shape) in enumerate(layers):
            if lname.endswith(".b"):
                chunks.append(np.zeros(shape[0]))
                continue
            fan_in = shape[0]
            last = name != BASE and k // 2 == n_dense - 1
            gain = 1.0 if last else np.sqrt(2.0)
            bound = gain * np.sqrt(3.0 / fan_in)
            chunks.append(rng.uniform(-bound, bound, size=shape).ravel())
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    return ParamSet(values, layout, seed)


def head_segment(head: str) -> str:
    return MAIN if head == "primary" else aux_segment(head)


def head_rows(params: ParamSet, head: str) -> np.ndarray:
    rows = params.layer_rows(head_segment(head)).copy()
    rows[-1, 4] = 0
    return rows


def dropout_masks(config: ModelConfig, n_heads: int, batch: int, rng: Optional[np.random.Generator]):
    shape = (n_heads, batch, config.feature_dim)
    if rng is None or config.dropout_rate == 0.0:
        return np.ones(shape)
    keep = 1.0 - config.dropout_rate
    return (rng.random(shape) < keep) / keep


def forward_batch(params: ParamSet, config: ModelConfig, X, head: str = "primary",
                  mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Outputs for a ``(B, d)`` batch; ``mask`` is a ``(B, f)`` dropout mask or None (eval)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != config.input_dim:
        raise ValueError(f"expected inputs of width {config.input_dim}, got {X.shape[1]}")
    seg = head_segment(head)
    if seg not in params.segments:
        raise KeyError(f"unknown head {head!r}")
    feats = _kernels.chain_forward(params.values, params.layer_rows(BASE), X)
    if mask is not None:
        feats = feats * mask
    return _kernels.chain_forward(params.values, head_rows(params, head), feats)


def forward(params: ParamSet, config: ModelConfig, x, head: str = "primary",
            mode: str = "eval", seed: Optional[int] = None) -> np.ndarray:
    """Raw head output for one input vector.

    ``mode="train"`` applies head-input dropout drawn from ``seed``; ``"eval"``
    is dropout-free and deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != config.input_dim:
        raise ValueError(f"expected a vector of length {config.input_dim}")
    if mode == "eval":
        mask = None
    elif mode == "train":
        if seed is None:
            raise ValueError("train mode needs a dropout seed")
        mask = dropout_masks(config, 1, 1, make_rng(seed, "dropout", head))[0]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return forward_batch(params, config, x[None, :], head, mask)[0]


def forward_var(w: ad.Var, params: ParamSet, X, head: str, mask=None) -> ad.Var:
    """Same network as :func:`forward_batch`, built on the autodiff tape."""

    def chain(a, rows):
        for w_off, b_off, nin, nout, relu in rows:
            W = ad.reshape(w[w_off:w_off + nin * nout], (nin, nout))
            a = a @ W + w[b_off:b_off + nout]
            if relu:
                a = ad.relu(a)
        return a

    feats = chain(ad.Var(np.asarray(X, dtype=np.float64)), params.layer_rows(BASE))
    if mask is not None:
        feats = feats * mask
    return chain(feats, head_rows(params, head))
