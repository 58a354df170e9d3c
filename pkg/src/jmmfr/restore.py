"""First-hop feature restoration with learnable per-edge scalars.

Each channel owns one scalar per edge per direction: restored member
features are weighted sums over job neighbors (job->member weights) and
vice versa. Weights initialize to 1/|N(target)| so restoration starts as a
neighborhood mean. Restored scores stay raw (pre-logistic); the loss applies
the logistic inside a fused cross-entropy.
"""

from __future__ import annotations

import numpy as np

from . import tape
from .errors import GraphOpError
from .graph import JOB, MEMBER, MULTI_HOT, BipartiteGraph
from .tape import Node, ParamRegistry

TO_MEMBER = "to_member"  # job -> member direction
TO_JOB = "to_job"        # member -> job direction
DIRECTIONS = (TO_MEMBER, TO_JOB)


class EdgeWeightStore:
    """Per-channel, per-direction weight vectors over the canonical edge order."""

    def __init__(self, g: BipartiteGraph, tensors: dict[str, dict[str, tape.Parameter]]):
        self._g = g
        self._tensors = tensors

    @classmethod
    def create(cls, g: BipartiteGraph, registry: ParamRegistry,
               channel_names: tuple[str, ...] | None = None) -> "EdgeWeightStore":
        if channel_names is None:
            channel_names = tuple(spec.name for spec in g.channels)
        deg_m = np.maximum(g.member_degrees, 1).astype(np.float64)
        deg_j = np.maximum(g.job_degrees, 1).astype(np.float64)
        into_member = 1.0 / deg_m[g.edge_member]  # one per canonical edge
        into_job = 1.0 / deg_j[g.edge_job]
        tensors: dict[str, dict[str, tape.Parameter]] = {}
        for name in channel_names:
            g.channel(name)  # validates
            tensors[name] = {
                TO_MEMBER: registry.register(f"restore/{name}/{TO_MEMBER}", into_member.copy()),
                TO_JOB: registry.register(f"restore/{name}/{TO_JOB}", into_job.copy()),
            }
        return cls(g, tensors)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(self._tensors)

    @property
    def n_scalars(self) -> int:
        return sum(t.value.size for per in self._tensors.values() for t in per.values())

    def weights(self, channel: str, direction: str) -> tape.Parameter:
        if direction not in DIRECTIONS:
            raise GraphOpError(f"unknown restoration direction {direction!r}")
        try:
            return self._tensors[channel][direction]
        except KeyError:
            raise GraphOpError(f"no restoration weights for channel {channel!r}") from None

    def weight(self, edge_index: int, channel: str, direction: str) -> float:
        """O(1) scalar lookup by canonical edge index."""
        arr = self.weights(channel, direction).value
        if not 0 <= edge_index < arr.size:
            raise GraphOpError(f"edge index {edge_index} out of range [0, {arr.size})")
        return float(arr[edge_index])


def restore_channel(g: BipartiteGraph, channel: str, store: EdgeWeightStore,
                    features: Node | None = None) -> Node:
    """Raw restored features for every node, (n, d).

    features supplies the dense per-node view the sums draw from; None means
    the channel's own observed multi-hot view (lookup channels must pass
    their embedded rows explicitly). Row i is the weighted sum of i's
    neighbors' rows; nodes without neighbors restore to zero.
    """
    spec = g.channel(channel)
    if features is None:
        if spec.kind != MULTI_HOT:
            raise GraphOpError(f"channel {channel!r} needs explicit dense features")
        features = tape.constant(g.dense(channel))
    if features.value.shape[0] != g.n_nodes:
        raise GraphOpError(
            f"features have {features.value.shape[0]} rows, graph has {g.n_nodes} nodes")

    nm = g.n_members
    w_member = store.weights(channel, TO_MEMBER)
    w_job = store.weights(channel, TO_JOB)

    # member targets: canonical order is already grouped by member
    src_jobs = tape.gather_rows(features, nm + g.member_neighbor_jobs())
    restored_members = tape.segment_sum(tape.scale_rows(src_jobs, w_member), g.member_ptr)

    # job targets: permute edges into (job, member) order
    perm = g.job_order
    src_members = tape.gather_rows(features, g.job_neighbor_members())
    w_job_perm = tape.gather_vec(w_job, perm)
    restored_jobs = tape.segment_sum(tape.scale_rows(src_members, w_job_perm), g.job_ptr)

    return tape.vstack_rows(restored_members, restored_jobs)


def concat_restored(g: BipartiteGraph, channel: str, restored: Node,
                    original: Node | None = None) -> Node:
    """[original || restored] per node, width 2 * d."""
    spec = g.channel(channel)
    if original is None:
        if spec.kind != MULTI_HOT:
            raise GraphOpError(f"channel {channel!r} needs explicit original features")
        original = tape.constant(g.dense(channel))
    if original.value.shape != restored.value.shape:
        raise GraphOpError(
            f"original {original.value.shape} and restored {restored.value.shape} disagree")
    return tape.concat_cols([original, restored])


def restoration_loss(g: BipartiteGraph, restored: dict[str, Node],
                     node_mask: np.ndarray | None = None) -> Node:
    """Mean over eligible channels of the per-channel reconstruction BCE.

    Per channel: logistic of the raw restored scores against the true
    multi-hot vector, averaged over every (node, feature) entry of nodes
    that are both observed on the channel and inside node_mask. Masking a
    node shrinks the denominator; it never adds numerator terms.
    """
    eligible = [spec for spec in g.channels
                if spec.in_restoration_loss and spec.name in restored]
    if not eligible:
        raise GraphOpError("no restoration-eligible channel among the restored inputs")
    parts = []
    for spec in eligible:
        rows = g.observed[spec.name]
        if node_mask is not None:
            rows = rows & node_mask
        if not rows.any():
            raise GraphOpError(
                f"restoration loss undefined: no observed node for channel {spec.name!r}")
        parts.append(tape.bce_with_logits(restored[spec.name], g.dense(spec.name), rows))
    return tape.mean_scalars(parts)
