"""Cross-validated method grids: inter-study arms, intra-study sub-groups, sweeps.

Every unit of work (one arm on one fold) gets its own seed derived from
``(master_seed, arm, fold)``, so results do not depend on scheduling or on
the number of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .. import pipeline as pl
from ..data import DataError, Dataset
from ..model import AuxTaskSpec, ModelConfig, stream_key
from ..optimize import TrainConfig
from ..synthsites import SiteConfig, Subgroup, default_consortium, make_consortium, make_site
from .folds import kfold_split
from .report import ExperimentReport, Row

CE_BETAS = (0.1, 0.5, 1.0)
HUBER_BETAS = (0.01, 0.05, 0.1)
ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = ModelConfig(20)
    train: TrainConfig = TrainConfig()
    inter: pl.AdaptConfig = pl.AdaptConfig.inter()
    intra: pl.AdaptConfig = pl.AdaptConfig()
    aux: tuple = (AuxTaskSpec("sex"), AuxTaskSpec("age", "regression"))
    sites: tuple = tuple(default_consortium())
    intra_site: SiteConfig = None
    master_seed: int = 0
    folds: int = 5
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "aux", tuple(self.aux))
        object.__setattr__(self, "sites", tuple(self.sites))
        if self.intra_site is None:
            object.__setattr__(self, "intra_site", default_intra_site())
        if self.folds < 2 or self.threads < 1:
            raise ValueError("folds must be >= 2 and threads >= 1")

    def model_for(self, data: Dataset) -> ModelConfig:
        return replace(self.model, input_dim=data.dim)

    def snapshot(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "inter": self.inter.to_dict(),
            "intra": self.intra.to_dict(),
            "aux": [t.to_dict() for t in self.aux],
            "sites": [s.to_dict() for s in self.sites],
            "intra_site": self.intra_site.to_dict(),
            "master_seed": self.master_seed,
            "folds": self.folds,
            "target_evaluation": "full target study for SrcOnly/JointSup/TarAdapt/SrcReg; "
                                 "target folds for TarOnly",
        }


def default_intra_site(n: int = 600, dim: int = 20) -> SiteConfig:
    """One study with a majority group and two progressively shifted minorities."""
    groups = (Subgroup("g0", 0.6, 0.0), Subgroup("g1", 0.25, 1.5), Subgroup("g2", 0.15, 3.0))
    return SiteConfig("study", n=n, dim=dim, subgroups=groups)


def arm_seed(master_seed: int, arm: str, fold: int, *extra) -> int:
    key = stream_key(master_seed, arm, fold, *extra)
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _run_tasks(tasks: dict, threads: int) -> dict:
    keys = list(tasks)
    if threads == 1:
        return {k: tasks[k]() for k in keys}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(tasks[k]) for k in keys]
        return {k: f.result() for k, f in zip(keys, futures)}


def poisoned(data: Dataset) -> Dataset:
    """Copy whose primary column is out of range everywhere."""
    return Dataset(data.features, np.full(len(data), -7, dtype=np.int64), data.aux,
                   data.site_id, data.subgroup)


def _aux_label(task: AuxTaskSpec, beta=None, alpha=None) -> str:
    parts = [f"beta={beta!r}"] if beta is not None else []
    if alpha is not None:
        parts.append(f"alpha={alpha!r}")
    return task.task_id + (";" + ";".join(parts) if parts else "")


class _Inter:
    """Fold-level building blocks shared by :func:`run_inter` and :func:`sweep`."""

    def __init__(self, source, target, configs: ExperimentConfig, poison=True):
        self.source, self.target, self.cfg = source, target, configs
        if source.dim != target.dim:
            raise DataError("source and target feature widths differ")
        self.model = configs.model_for(source)
        self.blind = poisoned(target) if poison else target.without_primary()
        self.src_folds = kfold_split(source, configs.folds, arm_seed(configs.master_seed, "folds", 0, source.site_id))
        self.tgt_folds = kfold_split(target, configs.folds, arm_seed(configs.master_seed, "folds", 0, target.site_id))

    def train(self, arm, fold, *extra) -> TrainConfig:
        return replace(self.cfg.train, seed=arm_seed(self.cfg.master_seed, arm, fold, *extra))

    def src_train(self, fold):
        return self.source.subset(self.src_folds[fold][0])

    def tar_only(self, fold):
        tr, va = self.tgt_folds[fold]
        p = pl.train_erm(self.target.subset(tr), self.model, self.train("TarOnly", fold))
        return pl.evaluate(p, self.model, self.target.subset(va))

    def src_only(self, fold):
        p = pl.train_erm(self.src_train(fold), self.model, self.train("SrcOnly", fold))
        return pl.evaluate(p, self.model, self.target)

    def pretrained(self, fold, task):
        return pl.pretrain(self.src_train(fold), self.model, [task], self.train("pretrain", fold))

    def adapted(self, fold, pre, task, alpha):
        adapt = replace(self.cfg.inter, alpha=alpha)
        base = pl.adapt_features(pre, self.blind, self.model, [task], adapt, self.train("adapt", fold))
        main = pl.adapt_primary(pre, base, self.src_train(fold), self.model, adapt,
                                self.train("refit", fold))
        return base, main

    def score(self, params):
        return pl.evaluate(params, self.model, self.target)


def run_inter(source: Dataset, target: Dataset, aux_task: AuxTaskSpec,
              configs: ExperimentConfig = ExperimentConfig(), poison: bool = True,
              memo: dict = None) -> ExperimentReport:
    """TarOnly / SrcOnly / JointSup / TarAdapt / SrcReg accuracies per fold.

    Source folds drive training; adapted and source-trained arms are scored
    on the full target study, TarOnly on held-out target folds. Adaptation
    only ever sees a copy of the target whose primary column is poisoned.
    ``memo`` shares the aux-independent TarOnly / SrcOnly arms between calls.
    """
    source.require_aux(aux_task.task_id)
    target.require_aux(aux_task.task_id)
    job = _Inter(source, target, configs, poison)
    alpha = configs.inter.alpha

    def pipeline_arm(f):
        def go():
            pre = job.pretrained(f, aux_task)
            base, main = job.adapted(f, pre, aux_task, alpha)
            return job.score(pre), job.score(base), job.score(main)
        return go

    memo = {} if memo is None else memo
    shared = {("TarOnly", f): ("TarOnly", target.site_id, f) for f in range(configs.folds)}
    shared.update({("SrcOnly", f): ("SrcOnly", source.site_id, target.site_id, f)
                   for f in range(configs.folds)})
    tasks = {}
    for f in range(configs.folds):
        if shared[("TarOnly", f)] not in memo:
            tasks[("TarOnly", f)] = lambda f=f: job.tar_only(f)
        if shared[("SrcOnly", f)] not in memo:
            tasks[("SrcOnly", f)] = lambda f=f: job.src_only(f)
        tasks[("pipeline", f)] = pipeline_arm(f)
    res = _run_tasks(tasks, configs.threads)
    for key, mkey in shared.items():
        if key in res:
            memo[mkey] = res[key]
        else:
            res[key] = memo[mkey]

    s, t, a = source.site_id, target.site_id, aux_task.task_id
    rows = []
    for f in range(configs.folds):
        joint, tar_adapt, src_reg = res[("pipeline", f)]
        for method, acc in (("TarOnly", res[("TarOnly", f)]), ("SrcOnly", res[("SrcOnly", f)]),
                            ("JointSup", joint), ("TarAdapt", tar_adapt), ("SrcReg", src_reg)):
            rows.append(Row(method, s, t, a, f, acc))
    rows.sort(key=lambda r: (r.method != "TarOnly", r.method, r.fold))
    return ExperimentReport(f"inter:{s}->{t}:{a}", rows, configs.snapshot())


def run_intra(study: Dataset, configs: ExperimentConfig = ExperimentConfig()) -> ExperimentReport:
    """Base (whole-study model) vs Transfer (proximal fine-tuning) per sub-group.

    Folds are stratified on (sub-group, label). Sub-groups with fewer than
    ``2 * folds`` members are reported as skipped.
    """
    if study.subgroup is None:
        raise DataError(f"study {study.site_id!r} has no sub-group tags")
    study.require_primary()
    k = configs.folds
    model = configs.model_for(study)
    strata = np.char.add(np.char.add(study.subgroup.astype(str), "|"), study.primary.astype(str))
    folds = kfold_split(study, k, arm_seed(configs.master_seed, "folds", 0, study.site_id), strata)
    tags = sorted(set(study.subgroup.tolist()))
    members = {g: study.subgroup == g for g in tags}
    active = [g for g in tags if members[g].sum() >= 2 * k]

    def base_arm(f):
        tr = folds[f][0]
        return pl.train_erm(study.subset(tr), model,
                            replace(configs.train, seed=arm_seed(configs.master_seed, "Base", f)))

    bases = _run_tasks({f: (lambda f=f: base_arm(f)) for f in range(k)}, configs.threads)

    def transfer_arm(f, g):
        def go():
            tr, va = folds[f]
            tr_g, va_g = tr[members[g][tr]], va[members[g][va]]
            train = replace(configs.train, seed=arm_seed(configs.master_seed, "Transfer", f, g))
            tuned = pl.finetune_subgroup(bases[f], study.subset(tr_g), model, configs.intra, train)
            val = study.subset(va_g)
            return pl.evaluate(bases[f], model, val), pl.evaluate(tuned, model, val)
        return go

    res = _run_tasks({(f, g): transfer_arm(f, g) for g in active for f in range(k)}, configs.threads)
    rows = []
    for g in tags:
        if g not in active:
            rows.append(Row("Base", study.site_id, g, "", None, None, "skipped"))
            rows.append(Row("Transfer", study.site_id, g, "", None, None, "skipped"))
            continue
        for method, pos in (("Base", 0), ("Transfer", 1)):
            rows.extend(Row(method, study.site_id, g, "", f, res[(f, g)][pos]) for f in range(k))
    return ExperimentReport(f"intra:{study.site_id}", rows, configs.snapshot())


def default_betas(task: AuxTaskSpec) -> tuple:
    return CE_BETAS if task.loss == "cross_entropy" else HUBER_BETAS


def sweep(source: Dataset, target: Dataset, aux_task: AuxTaskSpec, alpha_grid=ALPHAS,
          beta_grid=None, configs: ExperimentConfig = ExperimentConfig()) -> ExperimentReport:
    """TarAdapt per beta (at the configured alpha) and SrcReg per (beta, alpha).

    The aux column of each row encodes the grid point, e.g. ``sex;beta=0.5;alpha=0.3``.
    """
    beta_grid = default_betas(aux_task) if beta_grid is None else tuple(beta_grid)
    alpha_grid = tuple(alpha_grid)
    if not alpha_grid or not beta_grid:
        raise ValueError("sweep grids must be nonempty")
    source.require_aux(aux_task.task_id)
    target.require_aux(aux_task.task_id)
    job = _Inter(source, target, configs)
    alpha0 = configs.inter.alpha
    alphas = sorted(set(alpha_grid) | {alpha0})

    def point(f, beta):
        def go():
            task = aux_task.with_beta(beta)
            pre = job.pretrained(f, task)
            out = {}
            for a in alphas:
                base, main = job.adapted(f, pre, task, a)
                out[a] = (job.score(base), job.score(main))
            return out
        return go

    res = _run_tasks({(f, b): point(f, b) for b in beta_grid for f in range(configs.folds)},
                     configs.threads)
    s, t = source.site_id, target.site_id
    rows = []
    for b in beta_grid:
        rows.extend(Row("TarAdapt", s, t, _aux_label(aux_task, b), f, res[(f, b)][alpha0][0])
                    for f in range(configs.folds))
        for a in alpha_grid:
            rows.extend(Row("SrcReg", s, t, _aux_label(aux_task, b, a), f, res[(f, b)][a][1])
                        for f in range(configs.folds))
    snap = configs.snapshot()
    snap["sweep"] = {"aux": aux_task.task_id, "alpha_grid": list(alpha_grid), "beta_grid": list(beta_grid)}
    return ExperimentReport(f"sweep:{s}->{t}:{aux_task.task_id}", rows, snap)


def shifted_pairs(sites) -> list:
    """Ordered (source, target) index pairs whose site shifts differ."""
    mags = [float(np.linalg.norm(s.shift_vector())) for s in sites]
    return [(i, j) for i in range(len(sites)) for j in range(len(sites))
            if i != j and mags[i] != mags[j]]


def run_default(configs: ExperimentConfig = ExperimentConfig(), pairs=None,
                data=None) -> ExperimentReport:
    """The full inter-study grid over the configured consortium and aux tasks."""
    if data is None:
        data = make_consortium(list(configs.sites), configs.master_seed)
    pairs = shifted_pairs(configs.sites) if pairs is None else pairs
    report = ExperimentReport("inter:default", [], configs.snapshot())
    memo = {}
    for i, j in pairs:
        for task in configs.aux:
            report.extend(run_inter(data[i], data[j], task, configs, memo=memo))
    return report


def intra_study(configs: ExperimentConfig = ExperimentConfig()) -> Dataset:
    return make_site(configs.intra_site, configs.master_seed)
