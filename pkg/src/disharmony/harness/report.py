"""Experiment reports: per-fold rows, aggregates, CSV / JSON emission."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

METHODS = ("TarOnly", "SrcOnly", "JointSup", "TarAdapt", "SrcReg", "Transfer", "Base")
CSV_COLUMNS = ("experiment_id", "method", "source", "target", "aux", "fold", "accuracy")


@dataclass(frozen=True)
class Row:
    method: str
    source: str
    target: str
    aux: str
    fold: Optional[int]
    accuracy: Optional[float]
    status: str = "ok"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.status == "ok":
            if self.accuracy is None or not 0.0 <= self.accuracy <= 1.0:
                raise ValueError(f"accuracy {self.accuracy!r} outside [0, 1]")
        elif self.accuracy is not None:
            raise ValueError("skipped rows carry no accuracy")

    @property
    def cell(self):
        return (self.method, self.source, self.target, self.aux)


def _mean_std(values):
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else None
    return mean, std


@dataclass
class ExperimentReport:
    experiment_id: str
    rows: list = field(default_factory=list)
    config_snapshot: dict = field(default_factory=dict)

    @property
    def aggregates(self) -> dict:
        """``{(method, source, target, aux): {"n", "mean", "std"}}`` over scored rows."""
        groups = {}
        for r in self.rows:
            if r.status == "ok":
                groups.setdefault(r.cell, []).append(r.accuracy)
        out = {}
        for cell, accs in groups.items():
            mean, std = _mean_std(accs)
            out[cell] = {"n": len(accs), "mean": mean, "std": std}
        return out

    def mean(self, method, source=None, target=None, aux=None) -> float:
        cells = [v for (m, s, t, a), v in self.aggregates.items()
                 if m == method and source in (None, s) and target in (None, t) and aux in (None, a)]
        if len(cells) != 1:
            raise KeyError(f"{len(cells)} cells match {method, source, target, aux}")
        return cells[0]["mean"]

    def extend(self, other: "ExperimentReport") -> None:
        self.rows.extend(other.rows)

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "rows": [asdict(r) for r in self.rows],
            "aggregates": [{"method": m, "source": s, "target": t, "aux": a, **v}
                           for (m, s, t, a), v in self.aggregates.items()],
            "config_snapshot": self.config_snapshot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["experiment_id"], [Row(**r) for r in d["rows"]], d["config_snapshot"])


def to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([report.experiment_id, r.method, r.source, r.target, r.aux,
                    "" if r.fold is None else r.fold,
                    "" if r.accuracy is None else repr(r.accuracy)])
    return buf.getvalue()


def emit(report: ExperimentReport, fmt: str, path) -> None:
    if fmt == "csv":
        text = to_csv(report)
    elif fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def read_json(path) -> ExperimentReport:
    try:
        return ExperimentReport.from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise OSError(f"cannot read report {path}: {exc.strerror or exc}") from exc


def format_table(report: ExperimentReport) -> str:
    lines = [f"{'method':9s} {'source':8s} {'target':8s} {'aux':28s} {'n':>2s} {'mean':>7s} {'std':>7s}"]
    for (m, s, t, a), v in report.aggregates.items():
        std = "-" if v["std"] is None else f"{v['std']:.4f}"
        lines.append(f"{m:9s} {s:8s} {t:8s} {a:28s} {v['n']:2d} {v['mean']:.4f} {std:>7s}")
    skipped = [r for r in report.rows if r.status != "ok"]
    for r in skipped:
        lines.append(f"{r.method:9s} {r.source:8s} {r.target:8s} {r.aux:28s} {r.status}")
    return "\n".join(lines)
