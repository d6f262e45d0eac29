"""Kernel binary classifiers, proximal (doubly robust) refitting, bound diagnostics.

A classifier is ``f(x) = sum_i coef_i k(support_i, x)`` with labels in
{-1, +1} and logistic loss. Both fits run full-batch gradient descent on the
coefficients with step ``1 / L`` for the smoothness constant ``L`` of the
objective.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be positive")

    @property
    def code(self) -> int:
        return _kernels.RBF if self.kind == "rbf" else _kernels.LINEAR


def cross_gram(X, Y, spec: KernelSpec) -> np.ndarray:
    return _kernels.pairwise_kernel(np.atleast_2d(X), np.atleast_2d(Y), spec.code, spec.gamma)


def gram(X, spec: KernelSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 1:
        raise ValueError("need at least one point")
    K = cross_gram(X, X, spec)
    K = 0.5 * (K + K.T)
    if spec.kind == "rbf":
        np.fill_diagonal(K, 1.0)
    return K


@dataclass
class KernelModel:
    support: np.ndarray
    coef: np.ndarray
    spec: KernelSpec

    def decision(self, X) -> np.ndarray:
        return cross_gram(X, self.support, self.spec) @ self.coef

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0.0, 1, -1)


def rkhs_norm(model: KernelModel) -> float:
    q = float(model.coef @ gram(model.support, model.spec) @ model.coef)
    return math.sqrt(max(q, 0.0))


def rkhs_distance(f: KernelModel, g: KernelModel) -> float:
    """``||f - g||`` computed exactly on the concatenated expansion."""
    if f.spec != g.spec:
        raise ValueError("kernel specs differ")
    diff = KernelModel(np.vstack([f.support, g.support]),
                       np.concatenate([f.coef, -g.coef]), f.spec)
    return rkhs_norm(diff)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise ValueError("kernel classifiers need labels in {-1, +1}")
    return y.astype(np.float64)


def logistic_risk(model: KernelModel, X, y) -> float:
    m = _check_labels(y) * model.decision(X)
    return float(np.mean(np.logaddexp(0.0, -m)))


def _descend(A, y, P, anchor, reg, theta0, iters):
    """Gradient descent on mean logistic(y * A theta) + reg/2 (theta-anchor)' P (theta-anchor)."""
    N = A.shape[0]
    sa = np.linalg.norm(A, 2) ** 2 if A.size else 0.0
    sp = np.linalg.norm(P, 2) if P.size else 0.0
    L = sa / (4.0 * N) + reg * sp
    step = 1.0 / L if L > 0 else 0.0
    theta = theta0.copy()
    for _ in range(iters):
        m = y * (A @ theta)
        r = -y * 0.5 * (1.0 - np.tanh(0.5 * m))  # -y * sigmoid(-m)
        g = A.T @ r / N + reg * (P @ (theta - anchor))
        theta -= step * g
    return theta


def fit_kernel(X, y, spec: KernelSpec, lam: float, iters: int = 2000,
               support: Optional[np.ndarray] = None,
               init: Optional[np.ndarray] = None) -> KernelModel:
    """Penalized kernel logistic regression; support defaults to the training points."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = _check_labels(y)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    S = X if support is None else np.atleast_2d(np.asarray(support, dtype=np.float64))
    A = cross_gram(X, S, spec)
    P = gram(S, spec)
    theta0 = np.zeros(S.shape[0]) if init is None else np.array(init, dtype=np.float64)
    theta = _descend(A, y, P, np.zeros_like(theta0), lam, theta0, iters)
    return KernelModel(S.copy(), theta, spec)


def fit_dr(fhat: KernelModel, X, y, alpha_rkhs: float, iters: int = 2000,
           spec: Optional[KernelSpec] = None) -> KernelModel:
    """Sub-group fit anchored to ``fhat`` in RKHS norm.

    The support is ``fhat.support`` followed by the sub-group points;
    ``fhat`` is zero-extended onto it and used as the starting point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty subgroup")
    y = _check_labels(y)
    if spec is not None and spec != fhat.spec:
        raise ValueError("spec does not match fhat.spec")
    if alpha_rkhs < 0:
        raise ValueError("alpha_rkhs must be nonnegative")
    spec = fhat.spec
    S = np.vstack([fhat.support, X])
    anchor = np.concatenate([fhat.coef, np.zeros(X.shape[0])])
    A = cross_gram(X, S, spec)
    P = gram(S, spec)
    theta = _descend(A, y, P, anchor, alpha_rkhs, anchor, iters)
    return KernelModel(S, theta, spec)


@dataclass(frozen=True)
class BoundReport:
    trace_K: float
    norm_fhat: float
    nu: float
    nu_dr: float
    nu_prime: float
    m: int
    N: int
    delta: float
    term_naive: float
    term_dr: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        return cls(**json.loads(text))


def bound_report(fhat: KernelModel, train_K, m: int, N: int, delta: float,
                 nu: float, nu_dr: float) -> BoundReport:
    """Complexity terms of the sequestered and the anchored sub-group bounds.

    Leading constants are set to 1; values are comparable diagnostics only.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if m < 1 or N < 1:
        raise ValueError("m and N must be positive")
    tr = float(np.trace(np.asarray(train_K, dtype=np.float64)))
    norm = rkhs_norm(fhat)
    log_d = math.log(delta)
    nu_prime = nu_dr + math.sqrt((nu * nu * tr - log_d) / N)
    term_naive = math.sqrt(m * (nu * nu * tr - log_d) / N)
    term_dr = math.sqrt((nu_prime * nu_prime * tr - log_d) / N) + norm / N
    return BoundReport(tr, norm, nu, nu_dr, nu_prime, m, N, delta, term_naive, term_dr)
