"""Joint remoteness prediction and missing-feature restoration on
bipartite member-job graphs, with baseline graph encoders, a synthetic
data generator, and reproducible robustness sweeps."""

from .config import ExperimentConfig
from .errors import (CheckpointError, ConfigError, GraphFormatError,
                     GraphOpError, JmmfrError, MetricError,
                     NonFiniteGradientError, TapeError, TrainingError)
from .evaluate import (SweepResult, accuracy, average_precision,
                       eval_restoration, evaluate_split, export_embeddings,
                       proportional_dim_grid, skill_centroids, sweep_missing,
                       sweep_skill_dims)
from .graph import (BipartiteGraph, ChannelSpec, NodeId, SplitAssignment,
                    apply_missing_mask, default_channels, load_graph,
                    neighbors, restrict_skill_space, split_nodes)
from .model import ModelState, build_model, forward, load_model, save_model
from .synth import SynthConfig, desk_preset, generate, paper_scale_preset
from .train import predict, train

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph", "ChannelSpec", "CheckpointError", "ConfigError",
    "ExperimentConfig", "GraphFormatError", "GraphOpError", "JmmfrError",
    "MetricError", "ModelState", "NodeId", "NonFiniteGradientError",
    "SplitAssignment", "SweepResult", "SynthConfig", "TapeError",
    "TrainingError", "accuracy", "apply_missing_mask", "average_precision",
    "build_model", "default_channels", "desk_preset", "eval_restoration",
    "evaluate_split", "export_embeddings", "forward", "generate",
    "load_graph", "load_model", "neighbors", "paper_scale_preset", "predict",
    "proportional_dim_grid", "restrict_skill_space", "save_model",
    "skill_centroids", "split_nodes", "sweep_missing", "sweep_skill_dims",
    "train",
]
