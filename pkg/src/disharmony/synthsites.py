"""Synthetic multi-site studies with controllable shift, and an MMD diagnostic.

Each site draws a two-class Gaussian mixture in a latent space whose first
coordinate carries the class signal. Latent points are offset by the site
shift, then mapped to observed features by a seeded orthogonal matrix::

    z = mu_y + noise_sd * eps + (shift + subgroup_shift) * u
    x = Q z

With a scalar shift the offset direction ``u`` is ``(e0 + e1) / sqrt(2)``:
half along the class axis, half along a nuisance axis. Auxiliary columns:

* ``age``  = ``age_base + slope * y + age_offset + noise``
* ``sex``  = sign of the latent class coordinate (before the site shift),
  flipped with probability ``flip_prob``
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .data import DataError, Dataset
from .kernel_dr import KernelSpec
from . import _kernels
from .model import make_rng


@dataclass(frozen=True)
class Subgroup:
    tag: str
    fraction: float
    extra_shift: float = 0.0


@dataclass(frozen=True)
class SiteConfig:
    site_id: str
    n: int = 600
    dim: int = 20
    class_sep: float = 3.0
    shift: Union[float, Sequence[float]] = 0.0
    rotation_seed: int = 0
    noise_sd: float = 1.0
    age_slope: float = 1.0
    age_noise_sd: float = 0.5
    age_base: float = 0.0
    age_offset: float = 0.0
    flip_prob: float = 0.1
    subgroups: tuple = ()

    def __post_init__(self):
        if self.n <= 0 or self.dim <= 0:
            raise ValueError("n and dim must be positive")
        if self.dim < 2:
            raise ValueError("need at least two feature dimensions")
        if self.class_sep <= 0 or self.noise_sd <= 0 or self.age_noise_sd <= 0:
            raise ValueError("class_sep and noise levels must be positive")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ValueError("flip_prob must lie in [0, 0.5)")
        subs = tuple(s if isinstance(s, Subgroup) else Subgroup(*s) for s in self.subgroups)
        object.__setattr__(self, "subgroups", subs)
        if subs:
            if abs(sum(s.fraction for s in subs) - 1.0) > 1e-9:
                raise ValueError("subgroup fractions must sum to 1")
            if any(s.fraction < 0 for s in subs):
                raise ValueError("subgroup fractions must be nonnegative")
            if len({s.tag for s in subs}) != len(subs):
                raise ValueError("duplicate subgroup tags")
        if not np.isscalar(self.shift):
            vec = tuple(float(v) for v in self.shift)
            if len(vec) != self.dim:
                raise ValueError("shift vector length must equal dim")
            object.__setattr__(self, "shift", vec)

    def shift_vector(self) -> np.ndarray:
        if np.isscalar(self.shift):
            return float(self.shift) * shift_direction(self.dim)
        return np.array(self.shift, dtype=np.float64)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "subgroups"}
        d["shift"] = self.shift if np.isscalar(self.shift) else list(self.shift)
        d["subgroups"] = [[s.tag, s.fraction, s.extra_shift] for s in self.subgroups]
        return d


def shift_direction(dim: int) -> np.ndarray:
    u = np.zeros(dim)
    u[0] = u[1] = 1.0 / np.sqrt(2.0)
    return u


def orthogonal(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a seeded QR factorization."""
    A = make_rng(seed, "rotation").standard_normal((dim, dim))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def _group_counts(n: int, fractions) -> np.ndarray:
    raw = np.asarray(fractions, dtype=np.float64) * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def make_site(config: SiteConfig, master_seed: int) -> Dataset:
    rng = make_rng(master_seed, "site", config.site_id)
    n, d = config.n, config.dim
    y = rng.permutation(np.repeat([0, 1], [n // 2, n - n // 2]))

    z = config.noise_sd * rng.standard_normal((n, d))
    z[:, 0] += np.where(y == 1, 0.5, -0.5) * config.class_sep

    sex = (z[:, 0] > 0).astype(np.int64)
    flips = rng.random(n) < config.flip_prob
    sex = np.where(flips, 1 - sex, sex)
    age = (config.age_base + config.age_slope * y + config.age_offset
           + config.age_noise_sd * rng.standard_normal(n))

    z += config.shift_vector()
    subgroup = None
    if config.subgroups:
        counts = _group_counts(n, [s.fraction for s in config.subgroups])
        tags = np.repeat([s.tag for s in config.subgroups], counts)
        extra = np.repeat([s.extra_shift for s in config.subgroups], counts)
        perm = rng.permutation(n)
        subgroup, extra = tags[perm], extra[perm]
        z += extra[:, None] * shift_direction(d)[None, :]

    X = z @ orthogonal(d, config.rotation_seed).T
    return Dataset(X, y, {"age": age, "sex": sex}, config.site_id, subgroup)


def make_consortium(sites: list, master_seed: int) -> list:
    ids = [s.site_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate site ids in {ids}")
    return [make_site(s, master_seed) for s in sites]


def default_consortium(n: int = 600, dim: int = 20, shifts=(0.0, 2.0, 4.0)) -> list:
    names = "ABCDEFGH"
    return [SiteConfig(f"site{names[k]}", n=n, dim=dim, shift=s) for k, s in enumerate(shifts)]


def mmd(X, Y, spec: Optional[KernelSpec] = None) -> float:
    """Square root of the (clamped) unbiased squared-MMD U-statistic."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise DataError("mmd needs at least two samples on each side")
    if spec is None:
        spec = KernelSpec("rbf", 1.0 / X.shape[1])
    m2 = _kernels.mmd2_unbiased(X, Y, spec.code, spec.gamma)
    return float(np.sqrt(max(m2, 0.0)))
