"""Metrics, robustness sweeps, restored-feature scoring, embedding export.

Sweeps freeze the node split before any masking so the axis changes only
what the model gets to see, never which nodes are judged. Every cell is a
pure function of (graph, config, axis value, model, seed) and can be rerun
in isolation; aggregation is mean and population std over the seed list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import tape
from .config import ExperimentConfig
from .errors import MetricError
from .graph import (JOB, MEMBER, BipartiteGraph, NodeId, SplitAssignment,
                    apply_missing_mask, restrict_skill_space, split_nodes)
from .model import ModelState, forward
from .seeding import derive_seed, rng_for
from .train import labeled_split_indices, predict, train

DEFAULT_MISSING_GRID = (0.025, 0.08, 0.125, 0.25, 0.50, 0.75)
PAPER_SKILL_GRID = (3826, 2300, 1036, 516, 252, 69)
DEFAULT_SWEEP_SEEDS = (0, 1, 2)
DEFAULT_SWEEP_MODELS = ("jmmfr-mc", "mlp")


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of rows where (score >= threshold) equals the label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise MetricError("accuracy of an empty set is undefined")
    if scores.shape != labels.shape:
        raise MetricError(f"scores {scores.shape} vs labels {labels.shape}")
    return float(np.mean((scores >= threshold) == (labels > 0)))


def average_precision(scores, labels) -> float:
    """Area under the precision-recall steps of the descending ranking.

    Ties keep their original order (stable sort), so equal scores are
    ranked first-come-first-served rather than label-favourably.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise MetricError(f"scores {scores.shape} vs labels {labels.shape}")
    order = np.argsort(-scores, kind="stable")
    y = labels[order] > 0
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("average precision needs at least one positive label")
    precision = np.cumsum(y) / np.arange(1, y.size + 1)
    return float(precision[y].sum() / n_pos)


def permutation_baseline(scores, labels, seed: int) -> float:
    """AP after shuffling the labels: the no-signal reference level."""
    labels = np.asarray(labels)
    perm = rng_for(seed, "permuted-ap").permutation(labels.size)
    return average_precision(scores, labels[perm])


# ---------------------------------------------------------------------------
# restored-feature evaluation


def holdout_indices(g: BipartiteGraph, holdout) -> np.ndarray:
    idx = sorted(g.global_index(h) if isinstance(h, NodeId) else int(h)
                 for h in holdout)
    return np.asarray(idx, dtype=np.int64)


def restored_probabilities(g: BipartiteGraph, state: ModelState, channel: str) -> np.ndarray:
    fwd = forward(g, state, training=False)
    if channel not in fwd.restored:
        raise MetricError(f"model does not restore channel {channel!r}")
    return tape.sigmoid(fwd.restored[channel]).value


def eval_restoration(g: BipartiteGraph, state: ModelState, holdout,
                     channel: str = "skills") -> float:
    """Micro-averaged AP of restored scores on nodes masked before training.

    Flattens (node, feature) pairs across the holdout; the truth comes from
    the in-memory values that masking hid from the model.
    """
    idx = holdout_indices(g, holdout)
    if idx.size == 0:
        raise MetricError("restoration evaluation needs a non-empty holdout")
    probs = restored_probabilities(g, state, channel)[idx]
    truth = g.dense_full(channel)[idx]
    return average_precision(probs.ravel(), truth.ravel())


def _restoration_run_metrics(g: BipartiteGraph, state: ModelState, holdout,
                             seed: int) -> dict:
    # Scored on member rows only: jobs average ~1.5 neighbors here, so their
    # restored rows are mostly copies of a single profile and the pooled
    # number would track job degree rather than restoration quality.
    out: dict = {}
    if not state.cfg.restoration_enabled or not holdout:
        return out
    members = [h for h in holdout if isinstance(h, NodeId) and h.side == MEMBER]
    if not members:
        return out
    idx = holdout_indices(g, members)
    fwd = forward(g, state, training=False)
    for spec in g.channels:
        if not spec.in_restoration_loss or spec.name not in fwd.restored:
            continue
        probs = tape.sigmoid(fwd.restored[spec.name]).value[idx].ravel()
        truth = g.dense_full(spec.name)[idx].ravel()
        if not truth.any() or truth.all():
            continue
        perm = rng_for(seed, "restoration-permuted", spec.name).permutation(truth.size)
        out[f"restoration_{spec.name}_ap"] = average_precision(probs, truth)
        out[f"restoration_{spec.name}_permuted_ap"] = average_precision(probs, truth[perm])
    return out


# ---------------------------------------------------------------------------
# split evaluation


def evaluate_split(g: BipartiteGraph, state: ModelState, split: SplitAssignment,
                   name: str = "test") -> dict:
    """Accuracy and AP per side plus the pooled view of one split."""
    out: dict = {}
    pooled = []
    for side in (MEMBER, JOB):
        gidx = labeled_split_indices(g, split, name, side=side)
        entry = {"n": int(gidx.size), "accuracy": None, "average_precision": None}
        if gidx.size:
            probs = predict(g, state, gidx)
            y = g.labels[gidx].astype(np.int64)
            entry["accuracy"] = accuracy(probs, y)
            if 0 < int(y.sum()) < y.size:
                entry["average_precision"] = average_precision(probs, y)
            pooled.append((probs, y))
        out[side] = entry
    if pooled:
        probs = np.concatenate([p for p, _ in pooled])
        y = np.concatenate([yy for _, yy in pooled])
        out["combined"] = {
            "n": int(y.size),
            "accuracy": accuracy(probs, y),
            "average_precision": (average_precision(probs, y)
                                  if 0 < int(y.sum()) < y.size else None),
        }
    else:
        out["combined"] = {"n": 0, "accuracy": None, "average_precision": None}
    return out


def _flatten_eval(ev: dict) -> dict:
    return {
        "member_accuracy": ev[MEMBER]["accuracy"],
        "member_average_precision": ev[MEMBER]["average_precision"],
        "job_accuracy": ev[JOB]["accuracy"],
        "job_average_precision": ev[JOB]["average_precision"],
        "combined_accuracy": ev["combined"]["accuracy"],
        "combined_average_precision": ev["combined"]["average_precision"],
    }


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    axis: str
    values: tuple
    models: tuple[str, ...]
    seeds: tuple[int, ...]
    cells: list[dict]

    def cell(self, axis_value, model: str) -> dict:
        for c in self.cells:
            if c["axis_value"] == axis_value and c["model"] == model:
                return c
        raise MetricError(f"no sweep cell for ({axis_value!r}, {model!r})")

    def to_dict(self) -> dict:
        return {"axis": self.axis, "values": list(self.values),
                "models": list(self.models), "seeds": list(self.seeds),
                "cells": self.cells}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def text_table(self) -> str:
        cols = [(k, h) for k, h in _TABLE_COLUMNS
                if any(c["mean"].get(k) is not None for c in self.cells)]
        rows = [[self.axis, "model"] + [h for _, h in cols]]
        for c in self.cells:
            row = [_fmt_value(c["axis_value"]), c["model"]]
            for k, _ in cols:
                m, s = c["mean"].get(k), c["std"].get(k)
                row.append("-" if m is None else f"{m:.4f}±{s:.4f}")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
                 for r in rows]
        return "\n".join(lines) + "\n"


_TABLE_COLUMNS = [
    ("combined_accuracy", "accuracy"),
    ("member_accuracy", "member_acc"),
    ("member_average_precision", "member_ap"),
    ("job_accuracy", "job_acc"),
    ("job_average_precision", "job_ap"),
    ("restoration_skills_ap", "skills_ap"),
    ("restoration_skills_permuted_ap", "skills_perm"),
]


def _fmt_value(v) -> str:
    return format(v, "g") if isinstance(v, float) else str(v)


def _aggregate(runs: list[dict]) -> tuple[dict, dict]:
    keys = sorted({k for r in runs for k in r if k != "seed"})
    mean: dict = {}
    std: dict = {}
    for k in keys:
        vals = [r.get(k) for r in runs]
        if any(v is None for v in vals):
            mean[k] = None
            std[k] = None
        else:
            arr = np.asarray(vals, dtype=np.float64)
            mean[k] = float(arr.mean())
            std[k] = float(arr.std())
    return mean, std


def run_missing_cell(g: BipartiteGraph, cfg: ExperimentConfig, ratio: float,
                     model: str, seed: int,
                     split: SplitAssignment | None = None) -> dict:
    """One (ratio, model, seed) run; the mask depends on (seed, ratio) only,
    so every model sees identical data."""
    if split is None:
        split = split_nodes(g, cfg.split_fractions, cfg.seed,
                            stratify_by_label=cfg.stratify_by_label)
    mask_seed = derive_seed(seed, "missing-mask", format(ratio, ".6f"))
    masked, fresh = apply_missing_mask(g, ratio, mask_seed)
    run_cfg = cfg.override(encoder=model, seed=seed, missing_ratio=ratio)
    state, _ = train(masked, run_cfg, split=split)
    run = {"seed": int(seed)}
    run.update(_flatten_eval(evaluate_split(masked, state, split)))
    run.update(_restoration_run_metrics(masked, state, fresh, seed))
    return run


def _collect_runs(fn, g, cfg, triples, split, jobs: int, **kw) -> dict:
    # parallel workers recompute the identical split from cfg.seed
    if jobs <= 1:
        return {t: fn(g, cfg, *t, split=split, **kw) for t in triples}
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [(t, ex.submit(fn, g, cfg, *t, **kw)) for t in triples]
        return {t: f.result() for t, f in futures}


def _build_cells(values, models, runs_by_triple, seeds) -> list[dict]:
    cells = []
    for value in values:
        for model in models:
            runs = [runs_by_triple[(value, model, s)] for s in seeds]
            mean, std = _aggregate(runs)
            cells.append({"axis_value": value, "model": model, "runs": runs,
                          "mean": mean, "std": std})
    return cells


def sweep_missing(g: BipartiteGraph, cfg: ExperimentConfig,
                  ratios=DEFAULT_MISSING_GRID,
                  models=DEFAULT_SWEEP_MODELS,
                  seeds=DEFAULT_SWEEP_SEEDS,
                  jobs: int = 1) -> SweepResult:
    ratios = tuple(float(r) for r in ratios)
    if list(ratios) != sorted(set(ratios)):
        raise MetricError("missing ratios must be strictly increasing")
    split = split_nodes(g, cfg.split_fractions, cfg.seed,
                        stratify_by_label=cfg.stratify_by_label)
    triples = [(r, m, int(s)) for r in ratios for m in models for s in seeds]
    runs = _collect_runs(run_missing_cell, g, cfg, triples, split, jobs)
    return SweepResult(axis="missing_ratio", values=ratios,
                       models=tuple(models), seeds=tuple(int(s) for s in seeds),
                       cells=_build_cells(ratios, models, runs,
                                          [int(s) for s in seeds]))


def proportional_dim_grid(full_dim: int, reference=PAPER_SKILL_GRID) -> tuple[int, ...]:
    """The paper-shaped dim grid rescaled to a smaller skill space."""
    dims = []
    for d in reference:
        v = max(1, round(full_dim * d / reference[0]))
        if not dims or v < dims[-1]:
            dims.append(v)
    return tuple(dims)


def run_dims_cell(g: BipartiteGraph, cfg: ExperimentConfig, dim: int,
                  model: str, seed: int,
                  split: SplitAssignment | None = None,
                  channel: str = "skills") -> dict:
    if split is None:
        split = split_nodes(g, cfg.split_fractions, cfg.seed,
                            stratify_by_label=cfg.stratify_by_label)
    restricted = restrict_skill_space(g, dim, channel=channel)
    if cfg.missing_ratio > 0.0:
        mask_seed = derive_seed(seed, "missing-mask", format(cfg.missing_ratio, ".6f"))
        restricted, fresh = apply_missing_mask(restricted, cfg.missing_ratio, mask_seed)
    else:
        fresh = frozenset()
    run_cfg = cfg.override(encoder=model, seed=seed)
    state, _ = train(restricted, run_cfg, split=split)
    run = {"seed": int(seed)}
    run.update(_flatten_eval(evaluate_split(restricted, state, split)))
    run.update(_restoration_run_metrics(restricted, state, fresh, seed))
    return run


def sweep_skill_dims(g: BipartiteGraph, cfg: ExperimentConfig,
                     dims=None,
                     models=DEFAULT_SWEEP_MODELS,
                     seeds=DEFAULT_SWEEP_SEEDS,
                     channel: str = "skills",
                     jobs: int = 1) -> SweepResult:
    full = g.channel(channel).dim
    dims = proportional_dim_grid(full) if dims is None else tuple(int(d) for d in dims)
    if list(dims) != sorted(set(dims), reverse=True):
        raise MetricError("skill dims must be strictly decreasing")
    if dims[0] > full:
        raise MetricError(f"dim {dims[0]} exceeds the {channel} space ({full})")
    split = split_nodes(g, cfg.split_fractions, cfg.seed,
                        stratify_by_label=cfg.stratify_by_label)
    triples = [(d, m, int(s)) for d in dims for m in models for s in seeds]
    runs = _collect_runs(run_dims_cell, g, cfg, triples, split, jobs, channel=channel)
    return SweepResult(axis="skill_dim", values=dims,
                       models=tuple(models), seeds=tuple(int(s) for s in seeds),
                       cells=_build_cells(dims, models, runs,
                                          [int(s) for s in seeds]))


# ---------------------------------------------------------------------------
# embedding export


def export_embeddings(g: BipartiteGraph, state: ModelState, path,
                      channel: str = "skills"):
    """TSV of node id, side, embedding coordinates, owned feature indices.

    Feature indices reflect the observable state: hidden rows export empty.
    """
    g.channel(channel)
    width = state.embedding_width
    header = ["id", "side"] + [f"z{i:03d}" for i in range(width)] + [channel]
    lines = ["\t".join(header)]
    if g.n_nodes:
        Z = forward(g, state, training=False).embeddings.value
        X = g.dense(channel)
        for i in range(g.n_nodes):
            side = MEMBER if i < g.n_members else JOB
            feats = ";".join(str(j) for j in np.flatnonzero(X[i] > 0))
            row = [g.node_id_str(i), side]
            row.extend(repr(float(v)) for v in Z[i])
            row.append(feats)
            lines.append("\t".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def skill_centroids(g: BipartiteGraph, embeddings: np.ndarray, skills=None,
                    channel: str = "skills") -> tuple[np.ndarray, np.ndarray]:
    """Mean member embedding per skill; multi-skill members count in each."""
    Z = np.asarray(embeddings, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != g.n_nodes:
        raise MetricError(f"embeddings must be (n_nodes, d), got {Z.shape}")
    X = g.dense(channel)[: g.n_members]
    Zm = Z[: g.n_members]
    dim = g.channel(channel).dim
    if skills is None:
        skills = np.flatnonzero(X.sum(axis=0) > 0)
    skills = np.asarray(skills, dtype=np.int64)
    out = np.zeros((skills.size, Zm.shape[1]))
    for row, s in enumerate(skills):
        if not 0 <= s < dim:
            raise MetricError(f"skill index {s} outside the {channel} space")
        owners = X[:, s] > 0
        if not owners.any():
            raise MetricError(f"skill {s} has no member owner")
        out[row] = Zm[owners].mean(axis=0)
    return skills, out
