"""Per-channel encoders over the bipartite graph.

Flow per channel: side-specific linear projection into a shared space, then
one of four encoders (content MLP, GCN, mean-aggregating GraphSAGE, 2-head
GAT) produces the channel embedding; channel embeddings concatenate into
the node embedding. Graph encoders draw whole 1-hop neighborhoods from the
graph's CSR arrays; self-loops enter GCN/GAT explicitly while SAGE keeps
the self vector through concatenation. Dropout follows every relu while
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .errors import ConfigError, GraphOpError
from .graph import JOB, MEMBER, BipartiteGraph
from .tape import Node, ParamRegistry

ENCODER_KINDS = ("mlp", "gcn", "sage", "gat")
GAT_HEADS = 2
LEAKY_SLOPE = 0.2


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, scale, size=(fan_out, fan_in))


@dataclass(frozen=True)
class ChannelParams:
    """Projection and encoder tensors of one channel."""

    name: str
    kind: str
    proj_member_W: tape.Parameter
    proj_member_b: tape.Parameter
    proj_job_W: tape.Parameter
    proj_job_b: tape.Parameter
    layers: tuple[dict, ...]


def layer_dims(kind: str, proj_dim: int, channel_dim: int, depth: int) -> list[tuple[int, int]]:
    """(in, out) per encoder layer; hidden layers keep the projection width."""
    if kind == "mlp":
        return [(proj_dim, proj_dim), (proj_dim, channel_dim)]
    dims = [proj_dim] * depth + [channel_dim]
    return [(dims[i], dims[i + 1]) for i in range(depth)]


def build_channel_params(registry: ParamRegistry, rng: np.random.Generator, *,
                         name: str, kind: str, in_dim: int, proj_dim: int,
                         channel_dim: int, depth: int) -> ChannelParams:
    if kind not in ENCODER_KINDS:
        raise ConfigError(f"unknown encoder kind {kind!r}")
    if depth < 1:
        raise ConfigError(f"encoder depth must be >= 1, got {depth}")
    prefix = f"{name}/proj"
    pm_w = registry.register(f"{prefix}/member/W", glorot(rng, proj_dim, in_dim))
    pm_b = registry.register(f"{prefix}/member/b", np.zeros(proj_dim))
    pj_w = registry.register(f"{prefix}/job/W", glorot(rng, proj_dim, in_dim))
    pj_b = registry.register(f"{prefix}/job/b", np.zeros(proj_dim))

    layers = []
    for li, (d_in, d_out) in enumerate(layer_dims(kind, proj_dim, channel_dim, depth)):
        lp = f"{name}/enc/l{li}"
        if kind == "gat":
            if d_out % GAT_HEADS != 0:
                raise ConfigError(
                    f"gat layer width {d_out} must divide into {GAT_HEADS} heads")
            dh = d_out // GAT_HEADS
            heads = []
            for h in range(GAT_HEADS):
                heads.append({
                    "W": registry.register(f"{lp}/h{h}/W", glorot(rng, dh, d_in)),
                    "att_dst": registry.register(f"{lp}/h{h}/att_dst",
                                                 rng.normal(0.0, np.sqrt(1.0 / dh), size=dh)),
                    "att_src": registry.register(f"{lp}/h{h}/att_src",
                                                 rng.normal(0.0, np.sqrt(1.0 / dh), size=dh)),
                })
            layers.append({"heads": tuple(heads)})
        elif kind == "sage":
            layers.append({
                "W": registry.register(f"{lp}/W", glorot(rng, d_out, 2 * d_in)),
                "b": registry.register(f"{lp}/b", np.zeros(d_out)),
            })
        else:  # mlp, gcn
            layers.append({
                "W": registry.register(f"{lp}/W", glorot(rng, d_out, d_in)),
                "b": registry.register(f"{lp}/b", np.zeros(d_out)),
            })
    return ChannelParams(name=name, kind=kind, proj_member_W=pm_w, proj_member_b=pm_b,
                         proj_job_W=pj_w, proj_job_b=pj_b, layers=tuple(layers))


def project(x: Node, side: str, p: ChannelParams) -> Node:
    """Side-specific linear map into the shared encoder space."""
    if side == MEMBER:
        return tape.linear(x, p.proj_member_W, p.proj_member_b)
    if side == JOB:
        return tape.linear(x, p.proj_job_W, p.proj_job_b)
    raise GraphOpError(f"unknown side {side!r}")


def project_all(g: BipartiteGraph, x: Node, p: ChannelParams) -> Node:
    """Project member rows and job rows of a full-graph feature matrix."""
    members, jobs = tape.split_rows(x, g.n_members)
    return tape.vstack_rows(project(members, MEMBER, p), project(jobs, JOB, p))


def _maybe_dropout(x: Node, training: bool, rate: float, rng) -> Node:
    if training and rate > 0.0:
        return tape.dropout(x, rate, training=True, rng=rng)
    return x


def encode_mlp(x: Node, p: ChannelParams, *, training: bool = False,
               dropout_rate: float = 0.0, rng=None) -> Node:
    """Two fully connected layers, relu between; no graph access."""
    (l0, l1) = p.layers
    h = tape.relu(tape.linear(x, l0["W"], l0["b"]))
    h = _maybe_dropout(h, training, dropout_rate, rng)
    return tape.linear(h, l1["W"], l1["b"])


def _gcn_layer(g: BipartiteGraph, z: Node, W, b) -> Node:
    # symmetric-normalized sum over N(i) + self, coefficient 1/sqrt((di+1)(dj+1))
    dm = g.member_degrees + 1.0
    dj = g.job_degrees + 1.0
    coef_into_m = 1.0 / np.sqrt(dm[g.edge_member] * dj[g.edge_job])
    coef_into_j = coef_into_m[g.job_order]

    src_jobs = tape.gather_rows(z, g.n_members + g.member_neighbor_jobs())
    agg_m = tape.segment_sum(tape.mul_const(src_jobs, coef_into_m[:, None]), g.member_ptr)
    src_members = tape.gather_rows(z, g.job_neighbor_members())
    agg_j = tape.segment_sum(tape.mul_const(src_members, coef_into_j[:, None]), g.job_ptr)

    z_m, z_j = tape.split_rows(z, g.n_members)
    pre_m = tape.add(agg_m, tape.mul_const(z_m, (1.0 / dm)[:, None]))
    pre_j = tape.add(agg_j, tape.mul_const(z_j, (1.0 / dj)[:, None]))
    pre = tape.vstack_rows(pre_m, pre_j)
    return tape.relu(tape.linear(pre, W, b))


def encode_gcn(g: BipartiteGraph, x: Node, p: ChannelParams, *, training: bool = False,
               dropout_rate: float = 0.0, rng=None) -> Node:
    z = x
    for layer in p.layers:
        z = _gcn_layer(g, z, layer["W"], layer["b"])
        z = _maybe_dropout(z, training, dropout_rate, rng)
    return z


def _sage_layer(g: BipartiteGraph, z: Node, W, b) -> Node:
    # mean over neighbors (zero when none), combined with self by concat
    inv_m = (1.0 / np.maximum(g.member_degrees, 1))[:, None]
    inv_j = (1.0 / np.maximum(g.job_degrees, 1))[:, None]
    src_jobs = tape.gather_rows(z, g.n_members + g.member_neighbor_jobs())
    mean_m = tape.mul_const(tape.segment_sum(src_jobs, g.member_ptr), inv_m)
    src_members = tape.gather_rows(z, g.job_neighbor_members())
    mean_j = tape.mul_const(tape.segment_sum(src_members, g.job_ptr), inv_j)
    agg = tape.vstack_rows(mean_m, mean_j)
    return tape.relu(tape.linear(tape.concat_cols([z, agg]), W, b))


def encode_sage(g: BipartiteGraph, x: Node, p: ChannelParams, *, training: bool = False,
                dropout_rate: float = 0.0, rng=None) -> Node:
    z = x
    for layer in p.layers:
        z = _sage_layer(g, z, layer["W"], layer["b"])
        z = _maybe_dropout(z, training, dropout_rate, rng)
    return z


def _segment_softmax(logits: Node, ptr: np.ndarray) -> Node:
    # shift by the per-segment max (detached; softmax is shift-invariant)
    shift = np.maximum.reduceat(logits.value, ptr[:-1])
    e = tape.exp(tape.sub_const(logits, np.repeat(shift, np.diff(ptr))))
    denom = tape.segment_sum(e, ptr)
    return tape.div(e, tape.repeat_segments(denom, ptr))


def _gat_side(g: BipartiteGraph, side: str, wz: Node, head,
              collect: list | None) -> Node:
    ptr, src, dst = g.attention_layout[side]
    l_dst = tape.matvec(wz, head["att_dst"])
    l_src = tape.matvec(wz, head["att_src"])
    logits = tape.leaky_relu(
        tape.add(tape.gather_vec(l_dst, dst), tape.gather_vec(l_src, src)), LEAKY_SLOPE)
    alpha = _segment_softmax(logits, ptr)
    if collect is not None:
        collect.append({"side": side, "ptr": ptr, "alpha": alpha.value.copy()})
    return tape.segment_sum(tape.scale_rows(tape.gather_rows(wz, src), alpha), ptr)


def _gat_layer(g: BipartiteGraph, z: Node, heads, collect: list | None) -> Node:
    per_head = []
    for head in heads:
        wz = tape.linear(z, head["W"], None)
        out_m = _gat_side(g, MEMBER, wz, head, collect)
        out_j = _gat_side(g, JOB, wz, head, collect)
        per_head.append(tape.vstack_rows(out_m, out_j))
    return tape.relu(tape.concat_cols(per_head))


def encode_gat(g: BipartiteGraph, x: Node, p: ChannelParams, *, training: bool = False,
               dropout_rate: float = 0.0, rng=None,
               collect_attention: list | None = None) -> Node:
    """2-head attention over N(i) + self; head outputs concatenate, then relu.

    collect_attention, when a list, receives one record per (layer, head,
    side) holding the segment pointer and the attention coefficients.
    """
    z = x
    for layer in p.layers:
        z = _gat_layer(g, z, layer["heads"], collect_attention)
        z = _maybe_dropout(z, training, dropout_rate, rng)
    return z


_ENCODE = {"mlp": None, "gcn": encode_gcn, "sage": encode_sage, "gat": encode_gat}


def encode_channel(g: BipartiteGraph, x: Node, p: ChannelParams, *, training: bool = False,
                   dropout_rate: float = 0.0, rng=None,
                   collect_attention: list | None = None) -> Node:
    projected = project_all(g, x, p)
    if p.kind == "mlp":
        return encode_mlp(projected, p, training=training, dropout_rate=dropout_rate, rng=rng)
    if p.kind == "gat":
        return encode_gat(g, projected, p, training=training, dropout_rate=dropout_rate,
                          rng=rng, collect_attention=collect_attention)
    return _ENCODE[p.kind](g, projected, p, training=training,
                           dropout_rate=dropout_rate, rng=rng)


def multi_channel_encode(g: BipartiteGraph, params: dict[str, ChannelParams],
                         inputs: dict[str, Node], *, training: bool = False,
                         dropout_rate: float = 0.0, rng=None,
                         collect_attention: list | None = None
                         ) -> tuple[Node, dict[str, Node]]:
    """Encode every channel and concatenate blocks in channel order."""
    per_channel: dict[str, Node] = {}
    for name, p in params.items():
        per_channel[name] = encode_channel(
            g, inputs[name], p, training=training, dropout_rate=dropout_rate,
            rng=rng, collect_attention=collect_attention)
    z = tape.concat_cols([per_channel[name] for name in params])
    return z, per_channel
