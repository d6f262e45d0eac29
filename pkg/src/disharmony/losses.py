"""Losses, regularizers and the tape-based gradient entry point."""
import numpy as np

from . import autodiff as ad
from .model import ParamSet


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, label: int) -> float:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("logits must be a vector with at least two entries")
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} out of range for {z.size} classes")
    mx = z.max()
    return float(max(mx + np.log(np.exp(z - mx).sum()) - z[label], 0.0))


def huber(pred: float, target: float, delta: float = 1.0) -> float:
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not (np.isfinite(pred) and np.isfinite(target)):
        raise ValueError("huber inputs must be finite")
    r = abs(pred - target)
    return 0.5 * r * r if r <= delta else delta * (r - 0.5 * delta)


def proximal_penalty(theta, anchor, alpha: float):
    """``(alpha / 2) * ||theta - anchor||^2``; accepts arrays or tape Vars."""
    if isinstance(theta, ad.Var):
        if theta.shape != np.shape(anchor):
            raise ValueError("theta and anchor lengths differ")
        return ad.sumsq(theta - anchor) * (0.5 * alpha)
    theta = np.asarray(theta, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if theta.shape != anchor.shape:
        raise ValueError("theta and anchor lengths differ")
    diff = theta - anchor
    return 0.5 * alpha * float(diff @ diff)


def weight_decay(theta, lam: float):
    """``lam * ||theta||^2 / 2``; accepts arrays or tape Vars."""
    if isinstance(theta, ad.Var):
        return ad.sumsq(theta) * (0.5 * lam)
    theta = np.asarray(theta, dtype=np.float64)
    return 0.5 * lam * float(theta @ theta)


def grad(loss_closure, params: ParamSet, segments) -> np.ndarray:
    """Reverse-mode gradient of ``loss_closure(w)`` restricted to ``segments``.

    ``loss_closure`` receives the flat weights as an autodiff ``Var`` and must
    return a scalar ``Var``. Entries outside ``segments`` are exactly zero.
    """
    w = ad.Var(params.values.copy())
    loss = loss_closure(w)
    if not np.isfinite(loss.value).all():
        raise FloatingPointError(f"non-finite loss {loss.value}")
    loss.backward()
    g = np.zeros_like(params.values)
    if w.grad is not None:
        idx = params.index(segments)
        g[idx] = w.grad[idx]
    return g
