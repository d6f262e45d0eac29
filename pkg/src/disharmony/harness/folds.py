"""Stratified, seeded k-fold splits."""
from __future__ import annotations

import numpy as np

from ..data import DataError, Dataset
from ..model import make_rng


def kfold_split(data: Dataset, k: int, seed: int, strata=None):
    """Stratified k-fold split: ``[(train_idx, val_idx), ...]``.

    Members of each stratum (the primary label by default, or the supplied
    per-sample keys) are shuffled and dealt round-robin into folds; the deal
    position carries over between strata so fold sizes stay balanced.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    y = data.require_primary()
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < k):
        bad = classes[counts < k].tolist()
        raise DataError(f"classes {bad} have fewer than {k} members")
    keys = y.astype(str) if strata is None else np.asarray(strata).astype(str)
    if keys.shape != y.shape:
        raise ValueError("strata length must match the dataset")

    fold_of = np.empty(len(y), dtype=np.int64)
    rng = make_rng(seed, "kfold", k)
    pos = 0
    for key in np.unique(keys):
        members = np.flatnonzero(keys == key)
        members = members[rng.permutation(members.size)]
        fold_of[members] = (pos + np.arange(members.size)) % k
        pos += members.size
    idx = np.arange(len(y))
    return [(idx[fold_of != f], idx[fold_of == f]) for f in range(k)]
