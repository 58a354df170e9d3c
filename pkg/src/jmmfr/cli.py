"""Command-line entry point: generate, train, eval, sweep, export.

Precedence everywhere: command-line flags over config-file values over
defaults. All randomness flows from the resolved seed through named
sub-streams, so adding one consumer never shifts another's draws.
JMMFR_LOG in {error, info, debug} sets verbosity (default info).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import synth
from .config import MODEL_KINDS, ExperimentConfig
from .errors import ConfigError, JmmfrError
from .evaluate import (evaluate_split, export_embeddings, restored_probabilities,
                       sweep_missing, sweep_skill_dims)
from .graph import (JOB, MEMBER, BipartiteGraph, apply_missing_mask,
                    default_channels, load_graph, split_nodes)
from .model import load_model, save_model
from .seeding import derive_seed
from .train import train, write_report

log = logging.getLogger("jmmfr")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("JMMFR_LOG", "info").lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"JMMFR_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return doc


# flag dest -> ExperimentConfig field
_TRAIN_FLAGS = {
    "seed": "seed",
    "encoder": "encoder",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "learning_rate": "learning_rate",
    "dropout": "dropout",
    "beta1": "beta1",
    "beta2": "beta2",
    "missing_ratio": "missing_ratio",
    "patience": "patience",
}


def _experiment_config(args) -> ExperimentConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(_load_json(args.config))
    for dest, field in _TRAIN_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[field] = value
    return ExperimentConfig.from_dict(merged)


def _log_resolved(kind: str, cfg_dict: dict, seed: int):
    log.info("%s config: %s", kind, json.dumps(cfg_dict, sort_keys=True))
    log.info("seed: %d", seed)


def _dataset_paths(data_dir: str) -> tuple[str, str, str]:
    return (os.path.join(data_dir, "nodes.jsonl"),
            os.path.join(data_dir, "edges.jsonl"),
            os.path.join(data_dir, "manifest.json"))


def load_dataset(data_dir: str) -> BipartiteGraph:
    """Graph from a generated dataset directory; channel dims come from the
    manifest when present, else the full-scale defaults."""
    nodes, edges, manifest = _dataset_paths(data_dir)
    if not os.path.isdir(data_dir):
        raise ConfigError(f"data directory not found: {data_dir}")
    channels = None
    if os.path.exists(manifest):
        scfg = synth.read_manifest(manifest)
        channels = default_channels(scfg.skill_dim, scfg.industry_dim,
                                    scfg.title_embed_dim)
    return load_graph(nodes, edges, channels=channels)


def _masked_for_config(g: BipartiteGraph, cfg: ExperimentConfig) -> BipartiteGraph:
    if cfg.missing_ratio <= 0.0:
        return g
    seed = derive_seed(cfg.seed, "missing-mask", format(cfg.missing_ratio, ".6f"))
    masked, fresh = apply_missing_mask(g, cfg.missing_ratio, seed)
    log.info("masked %d nodes (ratio %.4f)", len(fresh), cfg.missing_ratio)
    return masked


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    base = (synth.paper_scale_preset() if args.preset == "paper"
            else synth.desk_preset()).to_dict()
    if args.config:
        base.update(_load_json(args.config))
    if args.seed is not None:
        base["seed"] = args.seed
    cfg = synth.SynthConfig.from_dict(base)
    _log_resolved("generate", cfg.to_dict(), cfg.seed)

    os.makedirs(args.out_dir, exist_ok=True)
    nodes, edges, manifest = _dataset_paths(args.out_dir)
    g = synth.generate(cfg)
    synth.save(g, nodes, edges)
    synth.write_manifest(manifest, cfg)
    log.info("wrote %s, %s, %s", nodes, edges, manifest)
    return 0


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    _log_resolved("train", cfg.to_dict(), cfg.seed)
    g = load_dataset(args.data_dir)
    g = _masked_for_config(g, cfg)

    state, report = train(g, cfg)
    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "checkpoint.json")
    report_path = os.path.join(args.out, "report.json")
    save_model(checkpoint, state)
    write_report(report_path, report)
    log.info("best epoch %s (val %s); wrote %s and %s",
             report["best_epoch"], report["best_val_metric"], checkpoint, report_path)
    return 0


def cmd_eval(args) -> int:
    g = load_dataset(args.data_dir)
    state = load_model(args.checkpoint, g)
    cfg = state.cfg
    _log_resolved("eval", cfg.to_dict(), cfg.seed)
    g = _masked_for_config(g, cfg)
    split = split_nodes(g, cfg.split_fractions, cfg.seed,
                        stratify_by_label=cfg.stratify_by_label)
    metrics = {"split": args.split}
    metrics.update(evaluate_split(g, state, split, name=args.split))
    text = json.dumps(metrics, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)
    return 0


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    _log_resolved("sweep", cfg.to_dict(), cfg.seed)
    g = load_dataset(args.data_dir)
    models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    for m in models:
        if m not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {m!r}; pick from {MODEL_KINDS}")
    seeds = _csv_ints(args.seeds)

    if args.axis == "missing":
        ratios = _csv_floats(args.ratios) if args.ratios else None
        kwargs = {} if ratios is None else {"ratios": ratios}
        result = sweep_missing(g, cfg, models=models, seeds=seeds,
                               jobs=args.jobs, **kwargs)
        stem = "sweep_missing"
    else:
        dims = _csv_ints(args.dims) if args.dims else None
        result = sweep_skill_dims(g, cfg, dims=dims, models=models, seeds=seeds,
                                  jobs=args.jobs)
        stem = "sweep_skills"

    os.makedirs(args.out_dir, exist_ok=True)
    json_path = os.path.join(args.out_dir, stem + ".json")
    text_path = os.path.join(args.out_dir, stem + ".txt")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(result.to_json())
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(result.text_table())
    log.info("wrote %s and %s", json_path, text_path)
    return 0


def cmd_export(args) -> int:
    g = load_dataset(args.data_dir)
    state = load_model(args.checkpoint, g)
    _log_resolved("export", state.cfg.to_dict(), state.cfg.seed)
    g = _masked_for_config(g, state.cfg)

    if args.what == "embeddings":
        export_embeddings(g, state, args.out, channel=args.channel)
    else:
        probs = restored_probabilities(g, state, args.channel)
        with open(args.out, "w", encoding="utf-8") as fh:
            for i in range(g.n_nodes):
                side = MEMBER if i < g.n_members else JOB
                row = probs[i]
                doc = {
                    "id": g.node_id_str(i),
                    "side": side,
                    "channel": args.channel,
                    "predicted": [int(j) for j in (row >= 0.5).nonzero()[0]],
                    "scores": [round(float(v), 6) for v in row],
                }
                fh.write(json.dumps(doc, sort_keys=True) + "\n")
    log.info("wrote %s", args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="jmmfr",
        description="Joint remoteness prediction and feature restoration on "
                    "bipartite member-job graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset directory")
    p.add_argument("--config", help="JSON overriding the preset's generator fields")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="fit a model and write checkpoint + report")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", help="JSON with experiment config fields")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--encoder", choices=MODEL_KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--dropout", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--missing-ratio", type=float, dest="missing_ratio")
    p.add_argument("--patience", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="metrics of a checkpoint on one split")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("test", "val"), default="test")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="robustness sweep over an axis")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", help="JSON with experiment config fields")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--axis", choices=("missing", "skills"), required=True)
    p.add_argument("--models", default="jmmfr-mc,mlp", help="comma-separated kinds")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated integers")
    p.add_argument("--ratios", help="comma-separated missing ratios")
    p.add_argument("--dims", help="comma-separated skill dims")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    for dest in ("seed", "epochs", "patience"):
        p.add_argument(f"--{dest}", type=int)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("export", help="embedding TSV or restored-feature JSONL")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--what", choices=("embeddings", "restored"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channel", default="skills")
    p.set_defaults(fn=cmd_export)

    return ap


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except JmmfrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
