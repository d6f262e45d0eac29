"""Tabular study data and its CSV / binary serializations."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

AUX_COLUMNS = ("age", "sex")


class DataError(ValueError):
    """Malformed or inconsistent dataset."""


@dataclass
class Dataset:
    features: np.ndarray
    primary: Optional[np.ndarray]
    aux: dict = field(default_factory=dict)
    site_id: str = ""
    subgroup: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        n = self.features.shape[0]
        if n == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if self.primary is not None:
            self.primary = np.asarray(self.primary, dtype=np.int64)
            if self.primary.shape != (n,):
                raise DataError("primary column length mismatch")
        self.aux = {k: np.asarray(v) for k, v in self.aux.items()}
        for k, v in self.aux.items():
            if v.shape != (n,):
                raise DataError(f"aux column {k!r} length mismatch")
        if self.subgroup is not None:
            self.subgroup = np.asarray(self.subgroup, dtype=str)
            if self.subgroup.shape != (n,):
                raise DataError("subgroup column length mismatch")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            None if self.primary is None else self.primary[idx],
            {k: v[idx] for k, v in self.aux.items()},
            self.site_id,
            None if self.subgroup is None else self.subgroup[idx],
        )

    def without_primary(self) -> "Dataset":
        return Dataset(self.features, None, self.aux, self.site_id, self.subgroup)

    def require_primary(self) -> np.ndarray:
        if self.primary is None:
            raise DataError(f"dataset {self.site_id!r} has no primary labels")
        return self.primary

    def require_aux(self, task_id: str) -> np.ndarray:
        if task_id not in self.aux:
            raise DataError(f"dataset {self.site_id!r} lacks aux column {task_id!r}")
        return self.aux[task_id]

    def equals(self, other: "Dataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)

        return (self.site_id == other.site_id
                and same(self.features, other.features)
                and same(self.primary, other.primary)
                and self.aux.keys() == other.aux.keys()
                and all(same(self.aux[k], other.aux[k]) for k in self.aux)
                and same(self.subgroup, other.subgroup))


def write_csv(data: Dataset, path) -> None:
    d = data.dim
    header = [f"feat_{j}" for j in range(d)] + ["primary", "age", "sex", "site", "subgroup"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.features[i]]
            row.append("" if data.primary is None else str(int(data.primary[i])))
            row.append(repr(float(data.aux["age"][i])) if "age" in data.aux else "")
            row.append(str(int(data.aux["sex"][i])) if "sex" in data.aux else "")
            row.append(data.site_id)
            row.append("" if data.subgroup is None else str(data.subgroup[i]))
            w.writerow(row)


def read_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    feats = [c for c in header if c.startswith("feat_")]
    expected = feats + ["primary", "age", "sex", "site", "subgroup"]
    if header != expected or feats != [f"feat_{j}" for j in range(len(feats))]:
        raise DataError(f"{path}: unexpected header {header}")
    d = len(feats)
    try:
        X = np.array([[float(v) for v in r[:d]] for r in body])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    col = {name: [r[d + k] for r in body] for k, name in enumerate(expected[d:])}
    primary = None if all(v == "" for v in col["primary"]) else np.array(col["primary"], dtype=np.int64)
    aux = {}
    if any(v != "" for v in col["age"]):
        aux["age"] = np.array(col["age"], dtype=np.float64)
    if any(v != "" for v in col["sex"]):
        aux["sex"] = np.array(col["sex"], dtype=np.int64)
    sites = set(col["site"])
    if len(sites) != 1:
        raise DataError(f"{path}: expected a single site, found {sorted(sites)}")
    subgroup = None if all(v == "" for v in col["subgroup"]) else np.array(col["subgroup"])
    return Dataset(X, primary, aux, sites.pop(), subgroup)


def save_binary(data: Dataset, path) -> None:
    arrays = {"features": data.features.astype("<f8"), "site_id": np.array(data.site_id)}
    if data.primary is not None:
        arrays["primary"] = data.primary.astype("<i8")
    if data.subgroup is not None:
        arrays["subgroup"] = data.subgroup
    for k, v in data.aux.items():
        arrays["aux__" + k] = v
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_binary(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        aux = {k[5:]: z[k] for k in z.files if k.startswith("aux__")}
        return Dataset(
            z["features"],
            z["primary"] if "primary" in z.files else None,
            aux,
            str(z["site_id"]),
            z["subgroup"] if "subgroup" in z.files else None,
        )


def load(path) -> Dataset:
    path = Path(path)
    return read_csv(path) if path.suffix == ".csv" else load_binary(path)
