"""Model assembly: parameters, full forward pass, decoding, checkpoints.

Forward order per channel: restore (when enabled) -> concat original with
restored -> side-specific projection -> encoder -> channel embeddings
concatenate -> decoder (relu hidden layer, then a scalar logistic). The
forward runs vectorized over all nodes; training losses select rows, which
yields the same gradients as batch-restricted computation because rows
outside the loss carry no adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .config import ExperimentConfig
from .encoders import ChannelParams, build_channel_params, glorot, multi_channel_encode
from .errors import CheckpointError
from .graph import EMBEDDING, MULTI_HOT, BipartiteGraph, ChannelSpec
from .restore import EdgeWeightStore, concat_restored, restore_channel
from .seeding import rng_for
from .tape import Node, ParamRegistry


def title_vocab_size(g: BipartiteGraph, channel: str) -> int:
    """Lookup vocabulary spanned by the stored ids (hidden values included)."""
    vals = g.lookup[channel]
    return max(1, int(vals.max()) + 1 if vals.size else 1)


@dataclass
class ModelState:
    """Everything needed to run the model on a compatible graph."""

    cfg: ExperimentConfig
    channels: tuple[ChannelSpec, ...]
    registry: ParamRegistry
    channel_params: dict[str, ChannelParams]
    embeddings: dict[str, tape.Parameter]   # lookup tables per lookup channel
    decoder_W1: tape.Parameter
    decoder_b1: tape.Parameter
    decoder_w2: tape.Parameter
    decoder_b2: tape.Parameter
    store: EdgeWeightStore | None
    vocab: dict[str, int]
    n_members: int
    n_jobs: int
    n_edges: int

    @property
    def embedding_width(self) -> int:
        return self.cfg.channel_dim * len(self.channels)


def build_model(g: BipartiteGraph, cfg: ExperimentConfig,
                vocab: dict[str, int] | None = None) -> ModelState:
    """Fresh parameters for cfg on g; vocab can widen lookup tables."""
    registry = ParamRegistry()
    rng = rng_for(cfg.seed, "init")
    kind = cfg.resolved_encoder
    restoration = cfg.restoration_enabled

    embeddings: dict[str, tape.Parameter] = {}
    vocab_out: dict[str, int] = {}
    channel_params: dict[str, ChannelParams] = {}
    for spec in g.channels:
        if spec.kind == EMBEDDING:
            size = title_vocab_size(g, spec.name)
            if vocab is not None:
                if vocab.get(spec.name, 0) < size:
                    raise CheckpointError(
                        f"graph needs {spec.name} vocabulary {size}, "
                        f"checkpoint has {vocab.get(spec.name, 0)}")
                size = vocab[spec.name]
            vocab_out[spec.name] = size
            table = rng.normal(0.0, np.sqrt(1.0 / spec.dim), size=(size, spec.dim))
            embeddings[spec.name] = registry.register(f"{spec.name}/embedding", table)
        in_dim = 2 * spec.dim if restoration else spec.dim
        channel_params[spec.name] = build_channel_params(
            registry, rng, name=spec.name, kind=kind, in_dim=in_dim,
            proj_dim=cfg.proj_dim, channel_dim=cfg.channel_dim, depth=cfg.depth)

    emb_width = cfg.channel_dim * len(g.channels)
    decoder_W1 = registry.register("decoder/W1", glorot(rng, cfg.decoder_hidden, emb_width))
    decoder_b1 = registry.register("decoder/b1", np.zeros(cfg.decoder_hidden))
    decoder_w2 = registry.register("decoder/w2",
                                   rng.normal(0.0, np.sqrt(1.0 / cfg.decoder_hidden),
                                              size=cfg.decoder_hidden))
    decoder_b2 = registry.register("decoder/b2", np.zeros(1))

    store = EdgeWeightStore.create(g, registry) if restoration else None

    return ModelState(cfg=cfg, channels=g.channels, registry=registry,
                      channel_params=channel_params, embeddings=embeddings,
                      decoder_W1=decoder_W1, decoder_b1=decoder_b1,
                      decoder_w2=decoder_w2, decoder_b2=decoder_b2,
                      store=store, vocab=vocab_out,
                      n_members=g.n_members, n_jobs=g.n_jobs, n_edges=g.n_edges)


def channel_dense_input(g: BipartiteGraph, state: ModelState, spec: ChannelSpec) -> Node:
    """Dense per-node view of one channel; unobserved nodes are zero rows."""
    if spec.kind == MULTI_HOT:
        return tape.constant(g.dense(spec.name))
    ids = g.lookup[spec.name]
    obs = g.observed[spec.name] & (ids >= 0)
    if ids.size and int(ids.max()) >= state.vocab[spec.name]:
        raise CheckpointError(
            f"graph holds {spec.name} id {int(ids.max())}, model vocabulary is "
            f"{state.vocab[spec.name]}")
    rows = tape.gather_rows(state.embeddings[spec.name], np.maximum(ids, 0))
    return tape.mul_const(rows, obs.astype(np.float64)[:, None])


@dataclass
class ForwardPass:
    probs: Node                      # (n,) remoteness probabilities
    embeddings: Node                 # (n, sum of channel dims)
    channel_embeddings: dict[str, Node]
    restored: dict[str, Node]        # raw restored scores per channel


def decode(z: Node, state: ModelState, *, training: bool = False, rng=None) -> Node:
    """relu hidden layer then a scalar logistic per row."""
    h = tape.relu(tape.linear(z, state.decoder_W1, state.decoder_b1))
    if training and state.cfg.dropout > 0.0:
        h = tape.dropout(h, state.cfg.dropout, training=True, rng=rng)
    return tape.sigmoid(tape.dot_bias(h, state.decoder_w2, state.decoder_b2))


def forward(g: BipartiteGraph, state: ModelState, *, training: bool = False,
            rng=None, collect_attention: list | None = None) -> ForwardPass:
    cfg = state.cfg
    check_compatible(g, state)
    restoration = cfg.restoration_enabled

    inputs: dict[str, Node] = {}
    restored: dict[str, Node] = {}
    for spec in g.channels:
        dense = channel_dense_input(g, state, spec)
        if restoration:
            raw = restore_channel(g, spec.name, state.store, features=dense)
            restored[spec.name] = raw
            inputs[spec.name] = concat_restored(g, spec.name, raw, original=dense)
        else:
            inputs[spec.name] = dense

    z, per_channel = multi_channel_encode(
        g, state.channel_params, inputs, training=training,
        dropout_rate=cfg.dropout, rng=rng, collect_attention=collect_attention)
    probs = decode(z, state, training=training, rng=rng)
    return ForwardPass(probs=probs, embeddings=z, channel_embeddings=per_channel,
                       restored=restored)


def check_compatible(g: BipartiteGraph, state: ModelState):
    if tuple(g.channels) != tuple(state.channels):
        raise CheckpointError("graph channels differ from the model's channels")
    if state.cfg.restoration_enabled:
        if (g.n_members, g.n_jobs, g.n_edges) != (state.n_members, state.n_jobs, state.n_edges):
            raise CheckpointError(
                "restoration weights are bound to the training graph: node/edge "
                f"counts ({g.n_members}, {g.n_jobs}, {g.n_edges}) != "
                f"({state.n_members}, {state.n_jobs}, {state.n_edges})")


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_meta(state: ModelState) -> dict:
    return {
        "config": state.cfg.to_dict(),
        "channels": [{"name": s.name, "kind": s.kind, "dim": s.dim,
                      "in_restoration_loss": s.in_restoration_loss}
                     for s in state.channels],
        "vocab": dict(state.vocab),
        "n_members": state.n_members,
        "n_jobs": state.n_jobs,
        "n_edges": state.n_edges,
    }


def save_model(path, state: ModelState):
    tape.save_params(path, state.registry, meta=checkpoint_meta(state))


def load_model(path, g: BipartiteGraph) -> ModelState:
    """Rebuild a saved model against a compatible graph."""
    meta, tensors = tape.load_params(path)
    try:
        cfg = ExperimentConfig.from_dict(meta["config"])
        specs = tuple(ChannelSpec(**c) for c in meta["channels"])
        vocab = dict(meta["vocab"])
    except KeyError as e:
        raise CheckpointError(f"checkpoint meta missing key {e}") from e
    if tuple(g.channels) != specs:
        raise CheckpointError(
            f"checkpoint channels {[(c.name, c.dim) for c in specs]} do not match "
            f"graph channels {[(c.name, c.dim) for c in g.channels]}")
    state = build_model(g, cfg, vocab=vocab)
    state.registry.load_state_dict(tensors)
    return state
