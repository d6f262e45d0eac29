"""Typed TOML experiment configs; unknown keys are errors.

Example::

    master_seed = 0
    folds = 5

    [model]
    extractor_widths = [32]

    [train]
    lr = 1e-4
    epochs = 60

    [inter]
    alpha = 0.5

    [[aux]]
    task_id = "sex"

    [[site]]
    site_id = "siteA"
    shift = 0.0
"""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..model import AuxTaskSpec
from ..synthsites import SiteConfig, Subgroup
from .experiments import ExperimentConfig


class ConfigError(ValueError):
    """Malformed, mistyped or unknown configuration entry."""


INT, FLOAT, STR = "int", "float", "str"
INTS, STRS, VEC, GROUPS = "list[int]", "list[str]", "float|list[float]", "subgroups"

SCHEMA = {
    "": {"master_seed": INT, "folds": INT, "threads": INT},
    "model": {"input_dim": INT, "extractor_widths": INTS, "head_widths": INTS,
              "dropout_rate": FLOAT, "num_primary_classes": INT, "activation": STR},
    "train": {"lr": FLOAT, "weight_decay": FLOAT, "batch_size": INT, "epochs": INT,
              "cycles": INT, "lr_min": FLOAT, "seed": INT, "augment_sd": FLOAT},
    "inter": {"alpha": FLOAT, "lambda_wd": FLOAT, "penalized_segments": STRS,
              "frozen_segments": STRS},
    "aux": {"task_id": STR, "kind": STR, "n_classes": INT, "loss": STR, "beta": FLOAT,
            "delta": FLOAT},
    "site": {"site_id": STR, "n": INT, "dim": INT, "class_sep": FLOAT, "shift": VEC,
             "rotation_seed": INT, "noise_sd": FLOAT, "age_slope": FLOAT,
             "age_noise_sd": FLOAT, "age_base": FLOAT, "age_offset": FLOAT,
             "flip_prob": FLOAT, "subgroups": GROUPS},
}
SCHEMA["intra"] = SCHEMA["inter"]
SCHEMA["intra_site"] = SCHEMA["site"]
TABLES = ("model", "train", "inter", "intra", "intra_site")
ARRAYS = ("aux", "site")


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check(where: str, kind: str, v):
    ok = {
        INT: lambda: isinstance(v, int) and not isinstance(v, bool),
        FLOAT: lambda: _num(v),
        STR: lambda: isinstance(v, str),
        INTS: lambda: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
        STRS: lambda: isinstance(v, list) and all(isinstance(x, str) for x in v),
        VEC: lambda: _num(v) or (isinstance(v, list) and all(_num(x) for x in v)),
        GROUPS: lambda: isinstance(v, list) and all(
            isinstance(g, list) and len(g) == 3 and isinstance(g[0], str) and _num(g[1]) and _num(g[2])
            for g in v),
    }[kind]()
    if not ok:
        raise ConfigError(f"{where}: expected {kind}, got {v!r}")
    if kind == FLOAT:
        return float(v)
    if kind == VEC:
        return float(v) if _num(v) else tuple(float(x) for x in v)
    if kind == GROUPS:
        return tuple(Subgroup(g[0], float(g[1]), float(g[2])) for g in v)
    if kind in (INTS, STRS):
        return tuple(v)
    return v


def _section(name: str, table, where: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    schema = SCHEMA[name]
    unknown = sorted(set(table) - set(schema))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return {k: _check(f"{where}.{k}", schema[k], v) for k, v in table.items()}


def _build(ctor, kw, where):
    try:
        return ctor(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse(doc: dict, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    """Overlay a parsed TOML document on ``base``."""
    allowed = set(SCHEMA[""]) | set(TABLES) | set(ARRAYS)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}")
    top = _section("", {k: v for k, v in doc.items() if k in SCHEMA[""]}, "config")
    cfg = base
    if "model" in doc:
        kw = _section("model", doc["model"], "model")
        cfg = replace(cfg, model=_build(lambda **k: replace(cfg.model, **k), kw, "model"))
    if "train" in doc:
        kw = _section("train", doc["train"], "train")
        cfg = replace(cfg, train=_build(lambda **k: replace(cfg.train, **k), kw, "train"))
    for name in ("inter", "intra"):
        if name in doc:
            kw = _section(name, doc[name], name)
            cur = getattr(cfg, name)
            cfg = replace(cfg, **{name: _build(lambda **k: replace(cur, **k), kw, name)})
    if "aux" in doc:
        if not isinstance(doc["aux"], list):
            raise ConfigError("aux: expected an array of tables")
        cfg = replace(cfg, aux=tuple(_build(AuxTaskSpec, _section("aux", t, f"aux[{i}]"), f"aux[{i}]")
                                     for i, t in enumerate(doc["aux"])))
    if "site" in doc:
        if not isinstance(doc["site"], list):
            raise ConfigError("site: expected an array of tables")
        sites = tuple(_build(SiteConfig, _section("site", t, f"site[{i}]"), f"site[{i}]")
                      for i, t in enumerate(doc["site"]))
        if len({s.site_id for s in sites}) != len(sites):
            raise ConfigError("site: duplicate site ids")
        cfg = replace(cfg, sites=sites)
    if "intra_site" in doc:
        kw = _section("intra_site", doc["intra_site"], "intra_site")
        cfg = replace(cfg, intra_site=_build(SiteConfig, kw, "intra_site"))
    return _build(lambda **k: replace(cfg, **k), top, "config")


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse(doc)
