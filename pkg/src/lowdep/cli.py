"""Command-line front end.

Run ``lowdep <command> --help`` for the options of each command. Run
configurations are INI files; see ``docs/config.md`` in the repository.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import dataclasses
import json
import logging
import os
import re
import sys
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from . import checkpoint
from .augment import AugmentConfig, augment_treebank
from .conllu import (ConlluParseError, Treebank, TreeValidationError, protocol_split,
                     protocol_split_with_dev, read_conllu, write_conllu)
from .evaluation import EvalReport, format_table, paired_ttest, uas_las
from .model import ModelConfig
from .training import (Hyperparams, SeqTraLScheme, Splits, StrategyConfig, evaluate,
                       integrate_and_finetune, pretrain_lcm, run_ensemble, self_train, train_mtl,
                       train_supervised)
from .validation import check_treebank
from .vocab import TASKS

DATA_ENV = "LOWDEP_DATA_DIR"
BUNDLED = "bundled:"

log = logging.getLogger("lowdep")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# paths, files, sidecars


def resolve_path(value: str, base: Optional[Path] = None) -> Path:
    """Resolve a data path.

    ``bundled:NAME`` names a file shipped with the package. Relative paths
    are tried against ``base`` (the config file's directory, or the working
    directory) and then against ``$LOWDEP_DATA_DIR``.
    """
    if value.startswith(BUNDLED):
        return Path(str(resources.files("lowdep") / "data" / value[len(BUNDLED):]))
    p = Path(value).expanduser()
    if p.is_absolute():
        return p
    candidates = [(base or Path.cwd()) / p]
    if os.environ.get(DATA_ENV):
        candidates.append(Path(os.environ[DATA_ENV]) / p)
    for c in candidates:
        if c.exists():
            return c
    return candidates[0]


def _read(path: Path, labeled: Optional[bool] = None, name: str = "input") -> Treebank:
    if not path.is_file():
        raise FileNotFoundError(f"{name}: no such file: {path}")
    return check_treebank(read_conllu(path, validate=labeled is True), labeled=labeled,
                          allow_empty=True, name=name)


def load_external(path: Path) -> Dict[str, np.ndarray]:
    """Read a JSON-lines sidecar of ``{"sent_id": ..., "vectors": [[...], ...]}`` records."""
    if not path.is_file():
        raise FileNotFoundError(f"external embeddings: no such file: {path}")
    out, dim = {}, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                vec = np.asarray(rec["vectors"], dtype=np.float64)
                sid = str(rec["sent_id"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad embedding record ({exc})") from None
            if vec.ndim != 2 or (dim is not None and vec.shape[1] != dim):
                raise ConfigError(f"{path}:{lineno}: vectors must be an n x d matrix of one width")
            dim = vec.shape[1]
            out[sid] = vec
    if not out:
        raise ConfigError(f"{path}: no embedding records")
    return out


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# configuration files


def _convert(raw: str, default, key: str):
    text = raw.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from None
    return text


def _section_kwargs(section, cls, allowed: Sequence[str], name: str) -> dict:
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in section.items():
        if key not in allowed:
            raise ConfigError(f"[{name}] unknown key {key!r}; allowed: {', '.join(allowed)}")
        default = defaults[key]
        if default is None:
            out[key] = None if raw.strip().lower() in ("", "none") else int(raw)
        else:
            out[key] = _convert(raw, default, f"{name}.{key}")
    return out


HP_KEYS = ("batch_size", "epochs", "dropout", "lr", "seed", "clip", "patience", "betas",
           "pretrain_epochs", "heldout_fraction")
MODEL_KEYS = ("word_dim", "char_dim", "hidden_dim", "arc_dim", "label_dim", "n_layers",
              "word_dropout")
STRATEGY_KEYS = ("augmentation", "augment_count", "nonce_rate", "pretraining", "mtl_task",
                 "mtl_weight", "seqtral", "unfreeze_epochs_per_layer", "lr_decay_factor",
                 "self_training")
DATA_KEYS = ("train", "dev", "unlabeled", "test", "external", "split_from", "n_train",
             "n_unlabeled", "n_dev", "split_seed")


def _none(value: Optional[str]) -> Optional[str]:
    if value is None or value.strip().lower() in ("", "none", "off"):
        return None
    return value.strip()


def strategy_from_section(section, name: str = "strategy") -> StrategyConfig:
    for key in section:
        if key not in STRATEGY_KEYS:
            raise ConfigError(f"[{name}] unknown key {key!r}; allowed: {', '.join(STRATEGY_KEYS)}")
    get = section.get
    try:
        aug = None
        if _none(get("augmentation")):
            aug = AugmentConfig(get("augmentation").strip(),
                                target_count=int(get("augment_count", "1000")),
                                nonce_rate=float(get("nonce_rate", "0.3")))
        scheme = None
        if _none(get("seqtral")):
            u = _none(get("unfreeze_epochs_per_layer"))
            d = _none(get("lr_decay_factor"))
            scheme = SeqTraLScheme(get("seqtral").strip(), None if u is None else int(u),
                                   None if d is None else float(d))
        return StrategyConfig(
            augmentation=aug,
            pretraining=_none(get("pretraining")) or "none",
            mtl_task=_none(get("mtl_task")),
            seqtral=scheme,
            self_training=_convert(get("self_training", "false"), False, f"{name}.self_training"),
            mtl_weight=float(get("mtl_weight", "1.0")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None


@dataclasses.dataclass
class RunConfig:
    strategy: StrategyConfig
    hp: Hyperparams
    model: ModelConfig
    data: Dict[str, str]
    base: Path
    cells: List[Tuple[str, StrategyConfig]] = dataclasses.field(default_factory=list)


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    for item in overrides or ():
        m = re.fullmatch(r"\s*([^.=\s]+)\.([^=\s]+)\s*=(.*)", item)
        if not m:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, key, value = m.groups()
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())


def load_config(path: Optional[Path], overrides: Sequence[str] = (),
                seed: Optional[int] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    base = Path.cwd()
    if path is not None:
        if not path.is_file():
            raise FileNotFoundError(f"config: no such file: {path}")
        parser.read(path, encoding="utf-8")
        base = path.resolve().parent
    apply_overrides(parser, overrides)
    known = {"data", "strategy", "hyperparams", "model"}
    cells = []
    for name in parser.sections():
        if name.startswith("cell:"):
            cells.append((name[5:].strip(), strategy_from_section(parser[name], name)))
        elif name not in known:
            raise ConfigError(f"unknown section [{name}]")
    empty = {}
    hp_kwargs = _section_kwargs(parser["hyperparams"] if parser.has_section("hyperparams") else empty,
                                Hyperparams, HP_KEYS, "hyperparams")
    if seed is not None:
        hp_kwargs["seed"] = seed
    model_kwargs = _section_kwargs(parser["model"] if parser.has_section("model") else empty,
                                   ModelConfig, MODEL_KEYS, "model")
    data = dict(parser["data"]) if parser.has_section("data") else {}
    for key in data:
        if key not in DATA_KEYS:
            raise ConfigError(f"[data] unknown key {key!r}; allowed: {', '.join(DATA_KEYS)}")
    strategy = strategy_from_section(parser["strategy"] if parser.has_section("strategy") else empty)
    try:
        hp = Hyperparams(**hp_kwargs)
        model = ModelConfig(dropout=hp.dropout, **model_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(strategy, hp, model, data, base, cells)


def load_splits(rc: RunConfig) -> Tuple[Splits, Optional[Dict[str, np.ndarray]]]:
    d = rc.data
    external = load_external(resolve_path(d["external"], rc.base)) if d.get("external") else None
    if d.get("split_from"):
        if d.get("train"):
            raise ConfigError("[data] give either split_from or train, not both")
        source = _read(resolve_path(d["split_from"], rc.base), labeled=True, name="split_from")
        n_dev = int(d.get("n_dev", "0"))
        args = (source, int(d.get("n_train", "500")), int(d.get("n_unlabeled", "1000")))
        seed = int(d.get("split_seed", "0"))
        if n_dev:
            train, unlabeled, dev = protocol_split_with_dev(*args, n_dev, seed=seed)
        else:
            (train, unlabeled), dev = protocol_split(*args, seed=seed), None
        test = _read(resolve_path(d["test"], rc.base), True, "test") if d.get("test") else None
        return Splits(train, dev, unlabeled, test), external
    if not d.get("train"):
        raise ConfigError("[data] needs a train file (or split_from)")

    def opt(key, labeled):
        return _read(resolve_path(d[key], rc.base), labeled, key) if d.get(key) else None

    return Splits(opt("train", True), opt("dev", True), opt("unlabeled", None),
                  opt("test", True)), external


# ---------------------------------------------------------------------------
# reporting helpers

STAGE_NAMES = {"base": "BiAFF", "pretraining": "+Pretraining", "mtl": "+MTL",
               "seqtral": "+SeqTraL", "self_training": "+Self-training",
               "augmentation": "+Data aug."}


def stage_label(stage: dict, cfg: StrategyConfig) -> str:
    name = stage["stage"]
    label = STAGE_NAMES[name]
    if name == "pretraining":
        label += " (LCM)" if cfg.pretraining == "lcm" else " (external)"
    elif name == "mtl":
        label += "-" + {"morph": "Morph", "case": "Case", "deprel": "Label"}[cfg.mtl_task]
    elif name == "seqtral":
        label += "-" + cfg.seqtral.kind
    elif name == "augmentation":
        label += f" ({cfg.augmentation.strategy})"
    return label


def ladder_table(report: dict, cfg: StrategyConfig, title: str = "") -> str:
    rows = [(stage_label(s, cfg), s["dev_uas"], s["dev_las"]) for s in report["stages"]]
    return format_table(rows, title)


def _print(msg: str = "") -> None:
    sys.stdout.write(msg + ("" if msg.endswith("\n") else "\n"))


# ---------------------------------------------------------------------------
# commands


def cmd_split(args) -> int:
    tb = _read(resolve_path(args.input), labeled=True, name="input")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.prefix or tb.name
    if args.dev:
        train, unlabeled, dev = protocol_split_with_dev(tb, args.train, args.unlabeled, args.dev,
                                                        seed=args.seed)
        parts = [("train", train), ("unlabeled", unlabeled), ("dev", dev)]
    else:
        train, unlabeled = protocol_split(tb, args.train, args.unlabeled, seed=args.seed)
        parts = [("train", train), ("unlabeled", unlabeled)]
    for name, part in parts:
        path = out / f"{stem}.{name}.conllu"
        write_conllu(part, path)
        _print(f"{name}\t{len(part)}\t{path}")
    return 0


def cmd_augment(args) -> int:
    tb = _read(resolve_path(args.input), labeled=True, name="input")
    cfg = AugmentConfig(args.strategy, target_count=args.count, nonce_rate=args.nonce_rate,
                        seed=args.seed)
    aug = augment_treebank(tb, cfg)
    write_conllu(tb + aug if args.include_source else aug, Path(args.output))
    _print(f"{cfg.strategy}: {len(aug)} augmented sentences from {len(tb)} sources")
    return 0


def _hp_and_model(args) -> Tuple[Hyperparams, ModelConfig]:
    rc = load_config(Path(args.config) if args.config else None, args.set, args.seed)
    hp = rc.hp
    changes = {k: getattr(args, k) for k in ("epochs", "batch_size", "lr", "patience")
               if getattr(args, k, None) is not None}
    if changes:
        hp = dataclasses.replace(hp, **changes)
    return hp, rc.model


def _train_report(result, hp: Hyperparams, extra: Optional[dict] = None) -> dict:
    return {"hyperparams": dataclasses.asdict(hp), "best_epoch": result.best_epoch,
            "history": result.history, "dev": None if result.dev_report is None else
            {"uas": result.dev_uas, "las": result.dev_las},
            **(extra or {})}


def cmd_train(args) -> int:
    hp, model_cfg = _hp_and_model(args)
    train = _read(resolve_path(args.train), True, "train")
    dev = _read(resolve_path(args.dev), True, "dev") if args.dev else None
    if args.mtl_task:
        result = train_mtl(train, dev, hp, args.mtl_task, args.mtl_weight, model_cfg)
    else:
        result = train_supervised(train, dev, hp, model_cfg)
    checkpoint.save(result.model, Path(args.out))
    report = _train_report(result, hp, {k: v for k, v in result.metadata.items()})
    _write_json(Path(args.report or str(args.out) + ".json"), report)
    if result.dev_report is not None:
        _print(f"dev {result.dev_report.summary()} (best epoch {result.best_epoch})")
    _print(f"saved {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    hp, model_cfg = _hp_and_model(args)
    base = checkpoint.load(Path(args.base))
    unlabeled = _read(resolve_path(args.unlabeled), None, "unlabeled")
    result = pretrain_lcm(unlabeled, base, hp, base.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tagger in result.taggers:
        path = out / f"lcm_{tagger.task}.ckpt"
        checkpoint.save(tagger, path)
        _print(f"{tagger.task}\theldout acc "
               f"{result.metadata['tasks'][tagger.task]['heldout_accuracy']:.2f}\t{path}")
    _write_json(out / "pretrain.json", {"hyperparams": dataclasses.asdict(hp), **result.metadata})
    return 0


def cmd_finetune(args) -> int:
    hp, _ = _hp_and_model(args)
    base = checkpoint.load(Path(args.base))
    encoders = [checkpoint.load_encoder(Path(p)) for p in args.encoders]
    train = _read(resolve_path(args.train), True, "train")
    dev = _read(resolve_path(args.dev), True, "dev") if args.dev else None
    scheme = SeqTraLScheme(args.scheme, args.unfreeze_epochs_per_layer, args.lr_decay_factor)
    result = integrate_and_finetune(base, encoders, scheme, train, dev, hp, args.mtl_task,
                                    args.mtl_weight)
    checkpoint.save(result.model, Path(args.out))
    _write_json(Path(str(args.out) + ".json"), _train_report(result, hp, result.metadata))
    if result.dev_report is not None:
        _print(f"dev {result.dev_report.summary()}")
    return 0


def cmd_selftrain(args) -> int:
    hp, model_cfg = _hp_and_model(args)
    base = checkpoint.load(Path(args.base))
    gold = _read(resolve_path(args.train), True, "train")
    unlabeled = _read(resolve_path(args.unlabeled), None, "unlabeled")
    dev = _read(resolve_path(args.dev), True, "dev") if args.dev else None
    result = self_train(base, unlabeled, gold, hp, dev)
    merged = result.metadata.pop("merged")
    if args.merged:
        write_conllu(merged, Path(args.merged))
    checkpoint.save(result.model, Path(args.out))
    _write_json(Path(str(args.out) + ".json"), _train_report(result, hp, result.metadata))
    _print(f"merged {len(merged)} sentences ({result.metadata['n_gold']} gold, "
           f"{result.metadata['n_predicted']} predicted)")
    if result.dev_report is not None:
        _print(f"dev {result.dev_report.summary()}")
    return 0


def cmd_eval(args) -> int:
    gold = _read(resolve_path(args.gold), True, "gold")
    pred = _read(resolve_path(args.pred), True, "pred")
    report = uas_las(gold, pred, include_punct=not args.no_punct)
    _print(report.summary())
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.baseline:
        baseline = EvalReport.from_json(Path(args.baseline).read_text(encoding="utf-8"))
        if baseline.include_punct != report.include_punct:
            raise ConfigError("baseline report was scored with a different punctuation setting")
        p = paired_ttest(report, baseline, args.metric)
        _print(f"paired t-test ({args.metric.upper()}) vs baseline {baseline.summary()}: p = {p:.4g}")
        if args.report:
            data = json.loads(Path(args.report).read_text(encoding="utf-8"))
            data["p_value"] = {"metric": args.metric.upper(), "value": p, "baseline": args.baseline}
            _write_json(Path(args.report), data)
    return 0


def cmd_parse(args) -> int:
    model = checkpoint.load(Path(args.model))
    tb = _read(resolve_path(args.input), None, "input")
    external = load_external(resolve_path(args.external)) if args.external else None
    parsed = Treebank(tuple(model.parse(list(tb), external=external)), tb.name)
    write_conllu(parsed, Path(args.output))
    _print(f"parsed {len(parsed)} sentences")
    return 0


def run_config(rc: RunConfig, cfg: StrategyConfig, out: Path, title: str = "") -> dict:
    """Run one pipeline and write its checkpoint, report and ladder table under ``out``."""
    splits, external = load_splits(rc)
    result = run_ensemble(cfg, splits, rc.hp, rc.model, external)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(result.model, out / "model.ckpt", {"seed": rc.hp.seed})
    _write_json(out / "report.json", result.report)
    (out / "table.txt").write_text(ladder_table(result.report, cfg, title), encoding="utf-8")
    return result.report


def cmd_ensemble(args) -> int:
    rc = load_config(Path(args.config), args.set, args.seed)
    out = Path(args.out_dir)
    report = run_config(rc, rc.strategy, out, title=f"dev, seed {rc.hp.seed}")
    _print((out / "table.txt").read_text(encoding="utf-8"))
    final = report["final"]
    if final.get("dev"):
        _print(f"final dev UAS {final['dev']['uas']:.2f} LAS {final['dev']['las']:.2f}")
    if final.get("test"):
        _print(f"final test UAS {final['test']['uas']:.2f} LAS {final['test']['las']:.2f}")
    _print(f"wrote {out / 'model.ckpt'} and {out / 'report.json'}")
    return 0


def _slug(index: int, name: str) -> str:
    return f"{index:02d}-" + (re.sub(r"[^A-Za-z0-9]+", "-", name).strip("-").lower() or "cell")


def _run_cell(job) -> dict:
    config_path, overrides, seed, index, name, out = job
    torch.set_num_threads(1)
    rc = load_config(config_path, overrides, seed)
    cfg = dict(rc.cells)[name]
    return run_config(rc, cfg, Path(out), title=name)


def cmd_ablate(args) -> int:
    config_path = Path(args.grid)
    rc = load_config(config_path, args.set, args.seed)  # validates every cell up front
    if not rc.cells:
        raise ConfigError(f"{config_path}: no [cell: NAME] sections")
    names = [n for n, _ in rc.cells]
    if len(set(names)) != len(names):
        raise ConfigError("cell names must be unique")
    load_splits(rc)  # surface data errors before any training
    out = Path(args.out_dir)
    jobs = [(config_path, list(args.set or ()), args.seed, i, name,
             str(out / "cells" / _slug(i, name))) for i, name in enumerate(names)]
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            reports = list(pool.map(_run_cell, jobs))
    else:
        reports = [_run_cell(job) for job in jobs]
    rows, records = [], []
    for (name, cfg), job, report in zip(rc.cells, jobs, reports):
        dev = report["final"].get("dev") or {}
        test = report["final"].get("test") or {}
        rows.append((name, dev.get("uas"), dev.get("las")))
        records.append({"cell": name, "config": cfg.to_dict(), "report": job[5] + "/report.json",
                        "dev": dev or None, "test": test or None})
    table = format_table(rows, f"ablation grid, dev, seed {rc.hp.seed}")
    (out / "table.txt").write_text(table, encoding="utf-8")
    _write_json(out / "table.json", {"seed": rc.hp.seed, "rows": records})
    _print(table)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [hyperparams] and [model] sections")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: config or 0)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowdep", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="carve train / unlabeled (/ dev) files from a treebank")
    p.add_argument("--input", required=True)
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--unlabeled", type=int, default=1000)
    p.add_argument("--dev", type=int, default=0, help="also carve a labeled dev sample")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--prefix", help="output file stem (default: input file stem)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="write augmented sentences")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--strategy", default="Nonce", help="Cropping, Rotation or Nonce")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--nonce-rate", dest="nonce_rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--include-source", dest="include_source", action="store_true")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train the baseline (or MTL) parser")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", help="JSON report path (default: <out>.json)")
    p.add_argument("--mtl-task", dest="mtl_task", choices=TASKS)
    p.add_argument("--mtl-weight", dest="mtl_weight", type=float, default=1.0)
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain", help="LCM pretraining of the three tagging encoders")
    p.add_argument("--base", required=True, help="trained parser checkpoint")
    p.add_argument("--unlabeled", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="gate pretrained encoders into a parser and fine-tune")
    p.add_argument("--base", required=True)
    p.add_argument("--encoders", nargs="+", required=True)
    p.add_argument("--scheme", default="FT", choices=("FE", "UF", "DL", "FT"))
    p.add_argument("--unfreeze-epochs-per-layer", dest="unfreeze_epochs_per_layer", type=int)
    p.add_argument("--lr-decay-factor", dest="lr_decay_factor", type=float)
    p.add_argument("--mtl-task", dest="mtl_task", choices=TASKS)
    p.add_argument("--mtl-weight", dest="mtl_weight", type=float, default=1.0)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("selftrain", help="parse unlabeled data, merge with gold, retrain")
    p.add_argument("--base", required=True)
    p.add_argument("--train", required=True, help="gold training data")
    p.add_argument("--unlabeled", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True)
    p.add_argument("--merged", help="also write the merged treebank here")
    _add_training_flags(p)
    p.set_defaults(func=cmd_selftrain)

    p = sub.add_parser("eval", help="score predictions; optional paired t-test against a baseline")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--no-punct", dest="no_punct", action="store_true")
    p.add_argument("--report", help="write the EvalReport JSON here")
    p.add_argument("--baseline", help="EvalReport JSON of a baseline on the same gold data")
    p.add_argument("--metric", default="UAS", choices=("UAS", "LAS", "uas", "las"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="run a configured strategy pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default="run")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("ablate", help="run a grid of strategy cells and tabulate them")
    p.add_argument("--grid", required=True)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", dest="out_dir", default="ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("parse", help="parse CoNLL-U with a trained checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--external", help="JSON-lines sidecar of per-token vectors")
    p.set_defaults(func=cmd_parse)
    return parser


USER_ERRORS = (ConlluParseError, TreeValidationError, ConfigError, ValueError, FileNotFoundError,
               KeyError, checkpoint.CheckpointError, RuntimeError, OSError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    torch.set_num_threads(max(1, int(os.environ.get("LOWDEP_THREADS", "1"))))
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"lowdep {args.command}: error: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
