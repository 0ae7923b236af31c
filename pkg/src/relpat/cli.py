"""Command-line pipeline: prepare -> mine -> classify -> train -> eval / spa-eval -> report.

Stages hand off through files under ``--out``.  Settings come from built-in
defaults, then a TOML config file (one section per stage), then environment
variables ``KGPAT_<SECTION>_<KEY>``, then command-line flags named after the
keys.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import evaluation as ev
from .kg import KGError, KnowledgeGraph, toy_dataset_path, write_vocab
from .models.families import FAMILIES, get_family
from .models.params import CheckpointError, load_checkpoint, save_checkpoint
from .models.training import TrainConfig, TrainingError, train, write_log
from .patterns import (DEFAULT_BUCKETS, PATTERNS, classify_relations, classify_triples, frequency_buckets,
                       pattern_matrix, write_assignment, write_bucket_stats, write_pattern_matrix)
from .rules import ConfigError, MiningConfig, RuleError, mine_rules, read_rules, threshold_preset, write_rules
from .spa import SpaConfig, SpaError, SpaModel, build_rulesets

logger = logging.getLogger("relpat")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ENV_PREFIX = "KGPAT_"


class UsageError(Exception):
    pass


class DependencyError(KGError):
    def __init__(self, path, stage):
        super().__init__(f"missing {path}; run `relpat {stage}` first")


_TRAIN_DEFAULTS = {f.name: f.default for f in fields(TrainConfig)}

DEFAULTS = {
    "run": {"dataset": "", "out": "runs", "model": "TransE", "threads": 0, "fixed_eval_vocab": False},
    "mine": {"threshold": "theta2", "min_pca": -1.0, "min_hc": -1.0, "max_body_len": 3, "min_support": 1,
             "confidence_mode": "mean", "injective": True},
    "classify": {"split": "test", "min_pca": 0.0, "min_hc": 0.0, "buckets": list(DEFAULT_BUCKETS)},
    "train": _TRAIN_DEFAULTS,
    "eval": {"split": "test", "directions": ["tail", "head"], "buckets": list(DEFAULT_BUCKETS)},
    "spa": {"sym": float("nan"), "inv": float("nan"), "mul": float("nan"), "comp2": float("nan"),
            "confidence_mode": "mean"},
}

# sections whose keys become flags of each subcommand
SECTIONS = {
    "prepare": ("run",),
    "mine": ("run", "mine"),
    "classify": ("run", "classify"),
    "train": ("run", "train"),
    "eval": ("run", "eval"),
    "spa-eval": ("run", "eval", "spa"),
    "report": ("run",),
}


# configuration -------------------------------------------------------------------

def _convert(value, default, where):
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            v = str(value).strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = [x.strip() for x in value.split(",") if x.strip()]
            kind = type(default[0]) if default else str
            return [kind(x) for x in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot use {value!r} (expected {type(default).__name__})") from None


def load_config(path=None, env=None, flags=None) -> dict:
    """Merge defaults, a TOML file, ``KGPAT_*`` variables and explicit flags."""
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    if path:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        for sec, vals in data.items():
            if sec not in cfg or not isinstance(vals, dict):
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key, value in vals.items():
                if key not in cfg[sec]:
                    raise ConfigError(f"{path}: unknown key {sec}.{key}")
                cfg[sec][key] = _convert(value, DEFAULTS[sec][key], f"{path}: {sec}.{key}")
    env = os.environ if env is None else env
    for sec, vals in cfg.items():
        for key in vals:
            name = f"{ENV_PREFIX}{sec}_{key}".upper()
            if name in env:
                vals[key] = _convert(env[name], DEFAULTS[sec][key], name)
    for (sec, key), value in (flags or {}).items():
        cfg[sec][key] = _convert(value, DEFAULTS[sec][key], f"--{key.replace('_', '-')}")
    return cfg


# artifacts -----------------------------------------------------------------------

class Workspace:
    def __init__(self, root):
        self.root = root

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def ensure(self, *parts):
        p = self.path(*parts)
        os.makedirs(p, exist_ok=True)
        return p

    def need(self, rel, stage):
        p = self.path(rel)
        if not os.path.exists(p):
            raise DependencyError(p, stage)
        return p

    dataset_file = "dataset.json"
    rules_file = "rules.txt"

    def checkpoint(self, family):
        return os.path.join("models", f"{family}.ckpt")


def _dataset_dir(name):
    return toy_dataset_path() if name == "toy" else name


def _load_kg(ws: Workspace, cfg) -> KnowledgeGraph:
    with open(ws.need(ws.dataset_file, "prepare"), encoding="utf-8") as f:
        meta = json.load(f)
    kg = KnowledgeGraph.from_directory(meta["path"], fixed_eval_vocab=meta["fixed_eval_vocab"])
    if kg.vocab_hash() != meta["vocab_hash"]:
        raise KGError(f"dataset at {meta['path']} changed since `relpat prepare`; run it again")
    return kg


def _threads(cfg) -> int:
    n = cfg["run"]["threads"]
    return n if n > 0 else (os.cpu_count() or 1)


def _family(cfg) -> str:
    try:
        return get_family(cfg["run"]["model"]).name
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _pattern_sets(kg, cfg, rules, split):
    ccfg = cfg["classify"]
    assignment = classify_relations(rules, kg.n_relations, ccfg["min_pca"], ccfg["min_hc"])
    return assignment, classify_triples(kg.splits[split], assignment)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# subcommands ---------------------------------------------------------------------

def cmd_prepare(cfg, ws):
    name = cfg["run"]["dataset"]
    if not name:
        raise UsageError("prepare needs --dataset DIR (or --dataset toy)")
    path = os.path.abspath(_dataset_dir(name))
    kg = KnowledgeGraph.from_directory(path, fixed_eval_vocab=cfg["run"]["fixed_eval_vocab"])
    ws.ensure()
    write_vocab(ws.path("entities.tsv"), kg.entities)
    write_vocab(ws.path("relations.tsv"), kg.relations)
    _write_json(ws.path(ws.dataset_file), {"path": path, "fixed_eval_vocab": cfg["run"]["fixed_eval_vocab"],
                                          "vocab_hash": kg.vocab_hash(), "stats": kg.stats()})
    print(json.dumps(kg.stats()))


def cmd_mine(cfg, ws):
    kg = _load_kg(ws, cfg)
    m = cfg["mine"]
    pca, hc = threshold_preset(m["threshold"]) if m["threshold"] else (0.0, 0.0)
    if m["min_pca"] >= 0:
        pca = m["min_pca"]
    if m["min_hc"] >= 0:
        hc = m["min_hc"]
    mc = MiningConfig(max_body_len=m["max_body_len"], min_pca=pca, min_hc=hc, min_support=m["min_support"],
                      confidence_mode=m["confidence_mode"], injective=m["injective"], workers=_threads(cfg))
    rules = mine_rules(kg, mc)
    write_rules(ws.path(ws.rules_file), rules, kg)
    print(f"{len(rules)} rules (pca >= {pca}, hc >= {hc}) -> {ws.path(ws.rules_file)}")


def cmd_classify(cfg, ws):
    kg = _load_kg(ws, cfg)
    rules = read_rules(ws.need(ws.rules_file, "mine"), kg)
    split = cfg["classify"]["split"]
    assignment, sets = _pattern_sets(kg, cfg, rules, split)
    out = ws.ensure("patterns")
    write_assignment(os.path.join(out, "assignment.tsv"), assignment, kg)
    write_pattern_matrix(os.path.join(out, "pattern_matrix.csv"), pattern_matrix(assignment))
    buckets = {p: frequency_buckets(sets[p], kg, cfg["classify"]["buckets"]) for p in PATTERNS}
    write_bucket_stats(os.path.join(out, "buckets.csv"), buckets)
    for p, n in assignment.counts().items():
        print(f"{p.value}\t{n} relations\t{len(sets[p])} {split} triples")


def cmd_train(cfg, ws):
    kg = _load_kg(ws, cfg)
    family = _family(cfg)
    tc = TrainConfig(**cfg["train"])
    result = train(kg, family, tc)
    ws.ensure("models")
    save_checkpoint(result.params, ws.path(ws.checkpoint(family)), vocab_hash=kg.vocab_hash(),
                    train_config=tc.to_dict())
    write_log(ws.path("models", f"{family}.log.csv"), result.log)
    print(f"{family}: best epoch {result.best_epoch}, valid MRR {result.best_mrr:.4f}")


def _scorer_inputs(cfg, ws):
    kg = _load_kg(ws, cfg)
    family = _family(cfg)
    params = load_checkpoint(ws.need(ws.checkpoint(family), "train"), family=family, vocab_hash=kg.vocab_hash())
    rules = read_rules(ws.need(ws.rules_file, "mine"), kg)
    split = cfg["eval"]["split"]
    assignment, sets = _pattern_sets(kg, cfg, rules, split)
    return kg, family, params, assignment, sets


def _evaluate(scorer, kg, cfg, sets, meta):
    e = cfg["eval"]
    report = ev.evaluate_per_pattern(scorer, sets, kg, triples=kg.splits[e["split"]],
                                     bucket_thresholds=e["buckets"], directions=tuple(e["directions"]),
                                     workers=_threads(cfg))
    report.meta = meta
    return report


def _save_report(ws, report, family, mode):
    out = ws.ensure("reports")
    ev.write_report_json(os.path.join(out, f"{family}.{mode}.json"), report)
    ev.write_report_csv(os.path.join(out, f"{family}.{mode}.csv"), report, family, mode)


def cmd_eval(cfg, ws):
    kg, family, params, _, sets = _scorer_inputs(cfg, ws)
    report = _evaluate(ev.KGEScorer(params), kg, cfg, sets, {"model": family, "spa_mode": "base"})
    _save_report(ws, report, family, "base")
    print(f"{family} base: MRR {report.mrr:.4f} over {report.count} queries")


def spa_config_from(cfg, family) -> SpaConfig:
    s = cfg["spa"]
    overrides = {k: s[k] for k in ("sym", "inv", "mul", "comp2") if not np.isnan(s[k])}
    return SpaConfig.for_family(family, s["confidence_mode"], **overrides)


def cmd_spa_eval(cfg, ws):
    kg, family, params, assignment, sets = _scorer_inputs(cfg, ws)
    spa_cfg = spa_config_from(cfg, family)
    model = SpaModel(params, build_rulesets(assignment, spa_cfg.confidence_mode), spa_cfg)
    meta = {"model": family, "spa_mode": "spa", "lambdas": spa_cfg.to_dict()}
    report = _evaluate(model, kg, cfg, sets, meta)
    _save_report(ws, report, family, "spa")
    base_path = ws.path("reports", f"{family}.base.json")
    if os.path.exists(base_path):
        base = ev.read_report_json(base_path)
    else:
        base = _evaluate(ev.KGEScorer(params), kg, cfg, sets, {"model": family, "spa_mode": "base"})
        _save_report(ws, base, family, "base")
    write_delta(ws.path("reports", f"{family}.delta.csv"), base, report)
    print(f"{family} spa: MRR {report.mrr:.4f} (base {base.mrr:.4f}) over {report.count} queries")


def _groups(report: ev.EvalReport):
    yield "all", report.overall
    yield from report.by_pattern.items()


def write_delta(path, base: ev.EvalReport, spa: ev.EvalReport) -> None:
    """Side-by-side table: pattern, metric, base, spa, delta."""
    other = dict(_groups(spa))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pattern", "metric", "base", "spa", "delta"])
        for pattern, m in _groups(base):
            if pattern not in other:
                continue
            s = dict(other[pattern].items())
            for name, v in m.items():
                if name == "count":
                    continue
                w.writerow([pattern, name, ev._fmt(v), ev._fmt(s[name]), ev._fmt(s[name] - v)])


COMPARISON_HEADER = ["model", "spa_mode", "pattern", "count", "mrr", "hits@1", "hits@3", "hits@10"]


def cmd_report(cfg, ws):
    paths = sorted(glob.glob(ws.path("reports", "*.json")))
    if not paths:
        raise DependencyError(ws.path("reports", "*.json"), "eval")
    rows = []
    for p in paths:
        r = ev.read_report_json(p)
        model, mode = r.meta.get("model", "?"), r.meta.get("spa_mode", "?")
        for pattern, m in _groups(r):
            rows.append([model, mode, pattern, m.count, ev._fmt(m.mrr)] + [ev._fmt(m.hits[n]) for n in ev.HITS])
    with open(ws.path("comparison.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COMPARISON_HEADER)
        w.writerows(rows)
    print(f"{len(rows)} rows -> {ws.path('comparison.csv')}")


COMMANDS = {
    "prepare": (cmd_prepare, "validate and index a dataset directory"),
    "mine": (cmd_mine, "mine closed-path rules into rules.txt"),
    "classify": (cmd_classify, "assign relational patterns; write assignment, matrix and bucket CSVs"),
    "train": (cmd_train, "train an embedding model; write checkpoint and log"),
    "eval": (cmd_eval, "filtered ranking report for the trained model"),
    "spa-eval": (cmd_spa_eval, "ranking report with pattern rescoring plus a delta table"),
    "report": (cmd_report, "merge all reports into comparison.csv"),
}


# argument parsing ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag_help(sec, key, default):
    if isinstance(default, float) and default != default:
        return f"[{sec}] {key} (default: per-model table)"
    if sec == "mine" and key in ("min_pca", "min_hc"):
        return f"[{sec}] {key} (default: from --threshold)"
    if isinstance(default, list):
        default = ",".join(map(str, default))
    return f"[{sec}] {key} (default: {default})"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relpat", description=__doc__.split("\n\n")[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="TOML file with [run], [mine], [classify], [train], [eval], [spa] sections")
        seen = set()
        for sec in SECTIONS[name]:
            for key, default in DEFAULTS[sec].items():
                if key in seen:
                    continue
                seen.add(key)
                flag = "--" + key.replace("_", "-")
                extra = {"choices": sorted(FAMILIES)} if key == "model" else {}
                p.add_argument(flag, dest=f"{sec}.{key}", default=None, help=_flag_help(sec, key, default),
                               metavar=key.upper(), **extra)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {tuple(k.split(".", 1)): v for k, v in vars(args).items() if "." in k and v is not None}
    try:
        cfg = load_config(args.config, flags=flags)
        ws = Workspace(cfg["run"]["out"])
        COMMANDS[args.command][0](cfg, ws)
    except (UsageError, ConfigError) as exc:
        print(f"relpat {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KGError, RuleError, CheckpointError, OSError) as exc:
        print(f"relpat {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, SpaError, FloatingPointError) as exc:
        print(f"relpat {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
