"""Command-line entry point: ``disharmony <command> ...``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .. import checkpoint, pipeline as pl
from ..data import DataError, load, save_binary, write_csv
from ..synthsites import make_consortium, make_site
from .config import ConfigError, load_config
from .experiments import ExperimentConfig, intra_study, run_default, run_intra, sweep
from .kernel_task import LineTask, run_line_task
from .report import emit, format_table, read_json

log = logging.getLogger("disharmony")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "threads", None):
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _aux(cfg: ExperimentConfig, task_id: str):
    for t in cfg.aux:
        if t.task_id == task_id:
            return t
    raise ConfigError(f"aux task {task_id!r} not declared in config (have {[t.task_id for t in cfg.aux]})")


def _load(path):
    try:
        return load(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


def _emit(report, out):
    fmt = "json" if str(out).endswith(".json") else "csv"
    emit(report, fmt, out)
    log.info("wrote %s (%d rows)", out, len(report.rows))


def cmd_gen(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_consortium(list(cfg.sites), cfg.master_seed)
    if args.intra:
        data.append(make_site(cfg.intra_site, cfg.master_seed))
    for d in data:
        path = out / f"{d.site_id}.{args.format}"
        write_csv(d, path) if args.format == "csv" else save_binary(d, path)
        print(path)


def cmd_pretrain(args):
    cfg = _config(args)
    src = _load(args.source)
    task = _aux(cfg, args.aux)
    model = cfg.model_for(src)
    train = replace(cfg.train, seed=args.seed) if args.seed is not None else cfg.train
    params = pl.pretrain(src, model, [task], train)
    prov = {"phase": "pretrain", "data": src.site_id, "train": train.to_dict()}
    prov["config_hash"] = pl.config_hash(model.to_dict(), task.to_dict(), prov)
    checkpoint.save(args.out, params, model, [task], prov)
    print(json.dumps({"checkpoint": args.out, "train_accuracy": pl.evaluate(params, model, src)}))


def cmd_adapt(args):
    cfg = _config(args)
    params, model, aux, prov = checkpoint.load(args.checkpoint)
    src, tgt = _load(args.source), _load(args.target)
    adapt = replace(cfg.inter, alpha=args.alpha) if args.alpha is not None else cfg.inter
    s2, s3 = (replace(cfg.train, seed=cfg.train.seed + k) for k in (1, 2))
    base = pl.adapt_features(params, tgt.without_primary(), model, aux, adapt, s2)
    main = pl.adapt_primary(params, base, src, model, adapt, s3)
    phases = [prov,
              {"phase": "adapt_features", "data": tgt.site_id, "train": s2.to_dict(), "adapt": adapt.to_dict()},
              {"phase": "adapt_primary", "data": src.site_id, "train": s3.to_dict(), "adapt": adapt.to_dict()}]
    new_prov = {"phases": phases, "config_hash": pl.config_hash(phases)}
    checkpoint.save(args.out, main, model, aux, new_prov)
    summary = {"checkpoint": args.out}
    if tgt.primary is not None:
        summary.update({name: pl.evaluate(p, model, tgt)
                        for name, p in (("JointSup", params), ("TarAdapt", base), ("SrcReg", main))})
    print(json.dumps(summary))


def cmd_intra(args):
    cfg = _config(args)
    study = _load(args.data) if args.data else intra_study(cfg)
    report = run_intra(study, cfg)
    _emit(report, args.out)
    print(format_table(report))


def _sites(cfg, data_dir):
    if not data_dir:
        return make_consortium(list(cfg.sites), cfg.master_seed)
    return [_load(next(Path(data_dir).glob(f"{s.site_id}.*"), Path(data_dir) / f"{s.site_id}.csv"))
            for s in cfg.sites]


def cmd_inter(args):
    cfg = _config(args)
    report = run_default(cfg, data=_sites(cfg, args.data_dir))
    _emit(report, args.out)
    print(format_table(report))


def cmd_sweep(args):
    cfg = _config(args)
    data = {d.site_id: d for d in _sites(cfg, args.data_dir)}
    for sid in (args.source, args.target):
        if sid not in data:
            raise ConfigError(f"unknown site {sid!r} (have {sorted(data)})")
    alphas = tuple(args.alphas) if args.alphas else None
    kw = {"alpha_grid": alphas} if alphas else {}
    report = sweep(data[args.source], data[args.target], _aux(cfg, args.aux),
                   beta_grid=args.betas, configs=cfg, **kw)
    _emit(report, args.out)
    print(format_table(report))


def cmd_kernel_dr(args):
    task = LineTask(alpha_rkhs=args.alpha_rkhs, lam=args.lam, gamma=args.gamma)
    result = run_line_task(task, args.seed)
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def cmd_report(args):
    report = read_json(args.input)
    print(format_table(report))
    if args.csv:
        emit(report, "csv", args.csv)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="disharmony", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="TOML experiment config (defaults if omitted)")
        return sp

    sp = add("gen", cmd_gen, "write the synthetic consortium")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--format", choices=("csv", "npz"), default="csv")
    sp.add_argument("--intra", action="store_true", help="also write the sub-grouped study")

    sp = add("pretrain", cmd_pretrain, "joint primary + aux training on a source study")
    sp.add_argument("--source", required=True)
    sp.add_argument("--aux", required=True, help="aux task id from the config")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--seed", type=int)

    sp = add("adapt", cmd_adapt, "adapt a pretrained checkpoint to a target study")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--alpha", type=float)

    sp = add("intra", cmd_intra, "sub-group fine-tuning, Base vs Transfer")
    sp.add_argument("--data", help="study file with sub-group tags (generated if omitted)")
    sp.add_argument("--out", required=True, help="report path (.csv or .json)")
    sp.add_argument("--threads", type=int)

    sp = add("inter", cmd_inter, "inter-study method grid over all shifted pairs")
    sp.add_argument("--data-dir")
    sp.add_argument("--out", required=True, help="report path (.csv or .json)")
    sp.add_argument("--threads", type=int)

    sp = add("sweep", cmd_sweep, "beta / alpha sweep for one pair")
    sp.add_argument("--source", required=True, help="site id")
    sp.add_argument("--target", required=True, help="site id")
    sp.add_argument("--aux", required=True)
    sp.add_argument("--alphas", type=float, nargs="+")
    sp.add_argument("--betas", type=float, nargs="+")
    sp.add_argument("--data-dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--threads", type=int)

    sp = add("kernel-dr", cmd_kernel_dr, "kernel refitting on the 1-D shifted task")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--alpha-rkhs", type=float, default=LineTask.alpha_rkhs)
    sp.add_argument("--lam", type=float, default=LineTask.lam)
    sp.add_argument("--gamma", type=float, default=LineTask.gamma)
    sp.add_argument("--out")

    sp = sub.add_parser("report", help="summarize a JSON report")
    sp.set_defaults(func=cmd_report)
    sp.add_argument("input")
    sp.add_argument("--csv", help="also write the CSV form")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, checkpoint.CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
