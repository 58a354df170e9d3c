"""Training loop: joint loss, node-level batches, Adam, early model selection.

Each batch runs the full-graph forward and restricts both losses to the
batch rows. Rows outside a loss carry zero adjoint, so the gradients match
a batch-restricted computation exactly; the full pass is just the cheaper
way to vectorize neighborhoods.
"""

from __future__ import annotations

import json

import numpy as np

from . import tape
from .config import ExperimentConfig
from .errors import NonFiniteGradientError, TrainingError
from .graph import JOB, MEMBER, BipartiteGraph, SplitAssignment, split_nodes
from .model import ModelState, build_model, forward
from .restore import restoration_loss
from .seeding import rng_for
from .tape import Node


def labeled_split_indices(g: BipartiteGraph, split: SplitAssignment, name: str,
                          side: str | None = None) -> np.ndarray:
    """Global indices of labeled nodes in one split, optionally one side."""
    if side is None:
        gidx = split.global_indices(name, g.n_members)
    else:
        offset = 0 if side == MEMBER else g.n_members
        gidx = offset + split.side_indices(side, name)
    return gidx[g.labels[gidx] >= 0]


def task_loss(probs: Node, g: BipartiteGraph, node_idx: np.ndarray) -> Node:
    """BCE between predicted remoteness and labels over the given nodes."""
    node_idx = np.asarray(node_idx, dtype=np.int64)
    if node_idx.size == 0:
        raise TrainingError("task loss needs at least one labeled node")
    y = g.labels[node_idx]
    if np.any(y < 0):
        raise TrainingError("task loss requested for nodes without labels")
    return tape.bce_loss(tape.gather_vec(probs, node_idx), y.astype(np.float64))


def total_loss(l1: Node | None, l2: Node | None, beta1: float, beta2: float) -> Node:
    parts = []
    if l1 is not None and beta1 != 0.0:
        parts.append(tape.smul(l1, beta1))
    if l2 is not None and beta2 != 0.0:
        parts.append(tape.smul(l2, beta2))
    if not parts:
        raise TrainingError("loss is identically zero: both loss weights vanish")
    return parts[0] if len(parts) == 1 else tape.add(parts[0], parts[1])


def _batch_restoration_loss(g: BipartiteGraph, restored, mask: np.ndarray) -> Node | None:
    # only channels with observed rows inside the batch contribute
    live = {}
    for spec in g.channels:
        if not spec.in_restoration_loss or spec.name not in restored:
            continue
        if (g.observed[spec.name] & mask).any():
            live[spec.name] = restored[spec.name]
    if not live:
        return None
    return restoration_loss(g, live, node_mask=mask)


def predict(g: BipartiteGraph, state: ModelState,
            nodes: np.ndarray | None = None) -> np.ndarray:
    """Remoteness probabilities with dropout off; global indices or all."""
    probs = forward(g, state, training=False).probs.value
    if nodes is None:
        return probs.copy()
    return probs[np.asarray(nodes, dtype=np.int64)].copy()


def _selection_metric(g, state, split, cfg) -> tuple[float | None, str]:
    from .evaluate import accuracy, average_precision

    side = None if cfg.selection_side == "both" else cfg.selection_side
    gidx = labeled_split_indices(g, split, "val", side=side)
    if gidx.size == 0:
        gidx = labeled_split_indices(g, split, "val")
    if gidx.size == 0:
        return None, "none"
    probs = predict(g, state, gidx)
    y = g.labels[gidx].astype(np.int64)
    if 0 < int(y.sum()) < y.size:
        return float(average_precision(probs, y)), "average_precision"
    return float(accuracy(probs, y)), "accuracy"


def _side_metrics(g, state, split, side) -> dict:
    from .evaluate import accuracy, average_precision

    gidx = labeled_split_indices(g, split, "test", side=side)
    out = {"n": int(gidx.size), "accuracy": None, "average_precision": None}
    if gidx.size == 0:
        return out
    probs = predict(g, state, gidx)
    y = g.labels[gidx].astype(np.int64)
    out["accuracy"] = float(accuracy(probs, y))
    if 0 < int(y.sum()) < y.size:
        out["average_precision"] = float(average_precision(probs, y))
    return out


def train(g: BipartiteGraph, cfg: ExperimentConfig,
          split: SplitAssignment | None = None) -> tuple[ModelState, dict]:
    """Fit on g's train split; returns the best-validation model and a report.

    Never hides features itself: pass the graph exactly as it should be
    seen. Model selection keeps the epoch with the highest validation
    metric on cfg.selection_side (average precision when the labels are
    mixed, accuracy otherwise) and restores those parameters at the end.
    """
    if cfg.beta1 == 0.0 and cfg.beta2 == 0.0:
        raise TrainingError("loss is identically zero: both loss weights vanish")
    if split is None:
        split = split_nodes(g, cfg.split_fractions, cfg.seed,
                            stratify_by_label=cfg.stratify_by_label)
    train_nodes = labeled_split_indices(g, split, "train")
    if train_nodes.size == 0:
        raise TrainingError("no labeled node in the train split")

    state = build_model(g, cfg)
    optimizer = tape.Adam(state.registry, lr=cfg.learning_rate)
    dropout_rng = rng_for(cfg.seed, "train", "dropout")
    restoration = cfg.restoration_enabled

    history: list[dict] = []
    best_flat = state.registry.get_flat()
    best_metric: float | None = None
    best_epoch = 0
    best_kind = "none"
    bad_epochs = 0
    stopped_early = False

    for epoch in range(1, cfg.epochs + 1):
        order = rng_for(cfg.seed, "train", "epoch", str(epoch)).permutation(train_nodes)
        l2_sum = tot_sum = l1_sum = 0.0
        seen = l1_seen = 0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            fwd = forward(g, state, training=True, rng=dropout_rng)
            l2 = task_loss(fwd.probs, g, batch)
            l1 = None
            if restoration:
                if cfg.full_graph_restoration_loss:
                    mask = np.ones(g.n_nodes, dtype=bool)
                else:
                    mask = np.zeros(g.n_nodes, dtype=bool)
                    mask[batch] = True
                l1 = _batch_restoration_loss(g, fwd.restored, mask)
            loss = total_loss(l1, l2, cfg.beta1, cfg.beta2)
            where = f"epoch {epoch}, batch {start // cfg.batch_size}"
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite loss at {where}")
            state.registry.zero_grads()
            loss.backward()
            try:
                optimizer.step()
            except NonFiniteGradientError as e:
                raise TrainingError(f"non-finite gradient at {where}: {e}") from e
            bs = int(batch.size)
            seen += bs
            l2_sum += float(l2.value) * bs
            tot_sum += float(loss.value) * bs
            if l1 is not None:
                l1_sum += float(l1.value) * bs
                l1_seen += bs
        metric, kind = _selection_metric(g, state, split, cfg)
        history.append({
            "epoch": epoch,
            "restoration_loss": (l1_sum / l1_seen) if l1_seen else None,
            "task_loss": l2_sum / seen,
            "total_loss": tot_sum / seen,
            "val_metric": metric,
            "val_metric_kind": kind,
        })
        if metric is not None and (best_metric is None or metric > best_metric):
            best_metric = metric
            best_epoch = epoch
            best_kind = kind
            best_flat = state.registry.get_flat()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stopped_early = True
                break

    state.registry.set_flat(best_flat)
    report = {
        "config": cfg.to_dict(),
        "data": {
            "n_members": g.n_members,
            "n_jobs": g.n_jobs,
            "n_edges": g.n_edges,
            "split_counts": split.counts(),
            "n_train_labeled": int(train_nodes.size),
            "n_val_labeled": int(labeled_split_indices(g, split, "val").size),
            "n_test_labeled": int(labeled_split_indices(g, split, "test").size),
        },
        "n_parameters": int(state.registry.n_scalars),
        "history": history,
        "epochs_run": len(history),
        "stopped_early": stopped_early,
        "best_epoch": best_epoch,
        "best_val_metric": best_metric,
        "selection": {"side": cfg.selection_side, "metric_kind": best_kind},
        "test": {
            MEMBER: _side_metrics(g, state, split, MEMBER),
            JOB: _side_metrics(g, state, split, JOB),
        },
    }
    return state, report


TRAIN_REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "data", "n_parameters", "history", "epochs_run",
                 "stopped_early", "best_epoch", "best_val_metric", "selection",
                 "test"],
    "properties": {
        "config": {"type": "object"},
        "data": {"type": "object"},
        "n_parameters": {"type": "integer", "minimum": 1},
        "history": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["epoch", "restoration_loss", "task_loss",
                             "total_loss", "val_metric", "val_metric_kind"],
                "properties": {
                    "epoch": {"type": "integer", "minimum": 1},
                    "restoration_loss": {"type": ["number", "null"]},
                    "task_loss": {"type": "number"},
                    "total_loss": {"type": "number"},
                    "val_metric": {"type": ["number", "null"]},
                    "val_metric_kind": {
                        "enum": ["average_precision", "accuracy", "none"]},
                },
            },
        },
        "epochs_run": {"type": "integer", "minimum": 0},
        "stopped_early": {"type": "boolean"},
        "best_epoch": {"type": "integer", "minimum": 0},
        "best_val_metric": {"type": ["number", "null"]},
        "selection": {"type": "object"},
        "test": {"type": "object"},
    },
}


def report_json(report: dict) -> str:
    """Canonical serialization: sorted keys, no volatile fields."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(path, report: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report))
