"""Bipartite member-job graph: channels, features, labels, masks, splits.

Node ids from input files are remapped to dense per-side indices at load
time; all downstream code works on indices. Neighborhoods are kept as
per-node sorted adjacency lists (CSR arrays); no adjacency matrix is ever
materialized. Feature channels are shared by both sides. A node that
provided no data at all is unobserved on every channel and contributes a
zero vector wherever dense features are needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import GraphFormatError, GraphOpError
from .seeding import rng_for

MEMBER = "member"
JOB = "job"
SIDES = (MEMBER, JOB)

EMBEDDING = "embedding-lookup"
MULTI_HOT = "multi-hot"

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


@dataclass(frozen=True)
class NodeId:
    """Side-qualified dense node index."""

    side: str
    index: int

    def __post_init__(self):
        if self.side not in SIDES:
            raise GraphOpError(f"unknown node side {self.side!r}")


@dataclass(frozen=True)
class ChannelSpec:
    """One feature channel: name, representation kind, width, loss eligibility.

    dim is the multi-hot width for multi-hot channels and the embedding
    dimension for lookup channels (the lookup vocabulary is data-dependent).
    """

    name: str
    kind: str
    dim: int
    in_restoration_loss: bool

    def __post_init__(self):
        if self.kind not in (EMBEDDING, MULTI_HOT):
            raise GraphOpError(f"unknown channel kind {self.kind!r}")
        if self.dim <= 0:
            raise GraphOpError(f"channel {self.name!r} needs positive dim, got {self.dim}")
        if self.kind == EMBEDDING and self.in_restoration_loss:
            raise GraphOpError(f"lookup channel {self.name!r} cannot join the restoration loss")


def default_channels(skill_dim: int = 3826, industry_dim: int = 151,
                     title_dim: int = 16) -> tuple[ChannelSpec, ...]:
    """title (lookup), skills and industries (multi-hot, restoration-eligible)."""
    return (
        ChannelSpec("title", EMBEDDING, title_dim, False),
        ChannelSpec("skills", MULTI_HOT, skill_dim, True),
        ChannelSpec("industries", MULTI_HOT, industry_dim, True),
    )


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Immutable member-job graph. Build through BipartiteGraph.build()."""

    member_ids: tuple[str, ...]
    job_ids: tuple[str, ...]
    channels: tuple[ChannelSpec, ...]
    # per lookup channel: (n,) int64, -1 when no value is stored
    lookup: dict[str, np.ndarray]
    # per multi-hot channel: per global node, sorted tuple of feature indices
    multihot: dict[str, tuple[tuple[int, ...], ...]]
    # per channel: (n,) bool
    observed: dict[str, np.ndarray]
    # (n,) int8: 0/1 labels, -1 unknown
    labels: np.ndarray
    # canonical edge arrays sorted by (member, job)
    edge_member: np.ndarray
    edge_job: np.ndarray

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, *, member_ids, job_ids, channels, lookup, multihot,
              observed, labels, edges) -> "BipartiteGraph":
        member_ids = tuple(str(x) for x in member_ids)
        job_ids = tuple(str(x) for x in job_ids)
        channels = tuple(channels)
        n = len(member_ids) + len(job_ids)

        by_name = {}
        for spec in channels:
            if spec.name in by_name:
                raise GraphOpError(f"duplicate channel name {spec.name!r}")
            by_name[spec.name] = spec

        lookup_arrays: dict[str, np.ndarray] = {}
        multihot_store: dict[str, tuple[tuple[int, ...], ...]] = {}
        observed_arrays: dict[str, np.ndarray] = {}
        for spec in channels:
            obs = np.asarray(observed[spec.name], dtype=bool)
            if obs.shape != (n,):
                raise GraphOpError(f"observed[{spec.name!r}] must have shape ({n},)")
            obs = obs.copy()
            obs.setflags(write=False)
            observed_arrays[spec.name] = obs
            if spec.kind == EMBEDDING:
                vals = np.asarray(lookup[spec.name], dtype=np.int64).copy()
                if vals.shape != (n,):
                    raise GraphOpError(f"lookup[{spec.name!r}] must have shape ({n},)")
                if np.any(vals < -1):
                    raise GraphOpError(f"lookup values in {spec.name!r} must be >= 0 or -1")
                vals.setflags(write=False)
                lookup_arrays[spec.name] = vals
            else:
                rows = multihot[spec.name]
                if len(rows) != n:
                    raise GraphOpError(f"multihot[{spec.name!r}] must have {n} rows")
                clean = []
                for i, row in enumerate(rows):
                    t = tuple(sorted(int(v) for v in row))
                    if len(set(t)) != len(t):
                        raise GraphOpError(f"duplicate feature index in {spec.name!r} row {i}")
                    if t and (t[0] < 0 or t[-1] >= spec.dim):
                        raise GraphOpError(
                            f"feature index out of range in {spec.name!r} row {i}: "
                            f"valid range is [0, {spec.dim})")
                    clean.append(t)
                multihot_store[spec.name] = tuple(clean)

        labels = np.asarray(labels, dtype=np.int8).copy()
        if labels.shape != (n,):
            raise GraphOpError(f"labels must have shape ({n},)")
        if not np.all(np.isin(labels, (-1, 0, 1))):
            raise GraphOpError("labels must be 0, 1 or -1 (unknown)")
        labels.setflags(write=False)

        edges = [(int(u), int(v)) for u, v in edges]
        for u, v in edges:
            if not (0 <= u < len(member_ids)) or not (0 <= v < len(job_ids)):
                raise GraphOpError(f"edge ({u}, {v}) references a missing node")
        if len(set(edges)) != len(edges):
            raise GraphOpError("duplicate edges are not allowed")
        edges.sort()
        edge_member = np.asarray([u for u, _ in edges], dtype=np.int64)
        edge_job = np.asarray([v for _, v in edges], dtype=np.int64)
        edge_member.setflags(write=False)
        edge_job.setflags(write=False)

        return cls(member_ids=member_ids, job_ids=job_ids, channels=channels,
                   lookup=lookup_arrays, multihot=multihot_store,
                   observed=observed_arrays, labels=labels,
                   edge_member=edge_member, edge_job=edge_job)

    # -- basic shape --------------------------------------------------------

    @property
    def n_members(self) -> int:
        return len(self.member_ids)

    @property
    def n_jobs(self) -> int:
        return len(self.job_ids)

    @property
    def n_nodes(self) -> int:
        return self.n_members + self.n_jobs

    @property
    def n_edges(self) -> int:
        return int(self.edge_member.size)

    def channel(self, name: str) -> ChannelSpec:
        for spec in self.channels:
            if spec.name == name:
                return spec
        raise GraphOpError(f"unknown channel {name!r}")

    def global_index(self, node: NodeId) -> int:
        if node.side == MEMBER:
            if not 0 <= node.index < self.n_members:
                raise GraphOpError(f"member index {node.index} out of range")
            return node.index
        if not 0 <= node.index < self.n_jobs:
            raise GraphOpError(f"job index {node.index} out of range")
        return self.n_members + node.index

    def node_side(self, g_idx: int) -> str:
        return MEMBER if g_idx < self.n_members else JOB

    def node_id_str(self, g_idx: int) -> str:
        if g_idx < self.n_members:
            return self.member_ids[g_idx]
        return self.job_ids[g_idx - self.n_members]

    # -- adjacency (CSR over the canonical edge order) ----------------------

    @cached_property
    def member_ptr(self) -> np.ndarray:
        counts = np.bincount(self.edge_member, minlength=self.n_members)
        ptr = np.zeros(self.n_members + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ptr

    @cached_property
    def job_order(self) -> np.ndarray:
        """Permutation of canonical edge ids sorted by (job, member)."""
        return np.lexsort((self.edge_member, self.edge_job)).astype(np.int64)

    @cached_property
    def job_ptr(self) -> np.ndarray:
        counts = np.bincount(self.edge_job, minlength=self.n_jobs)
        ptr = np.zeros(self.n_jobs + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ptr

    @cached_property
    def member_degrees(self) -> np.ndarray:
        return np.diff(self.member_ptr)

    @cached_property
    def job_degrees(self) -> np.ndarray:
        return np.diff(self.job_ptr)

    @cached_property
    def degrees(self) -> np.ndarray:
        """(n,) neighbor counts, members first."""
        return np.concatenate([self.member_degrees, self.job_degrees])

    def member_neighbor_jobs(self) -> np.ndarray:
        """Job index per canonical edge; segment i (member_ptr) lists N(member i)."""
        return self.edge_job

    def job_neighbor_members(self) -> np.ndarray:
        """Member index per (job, member)-ordered edge; segments via job_ptr."""
        return self.edge_member[self.job_order]

    @cached_property
    def attention_layout(self) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Per side: (ptr, src_global, dst_global) over [self + neighbors].

        Every segment contains the node itself, so segments are never empty.
        Entry order inside a segment is ascending global source index.
        """
        out = {}
        nm = self.n_members
        # member side: self (global < nm) precedes job neighbors (global >= nm)
        counts = self.member_degrees + 1
        ptr = np.zeros(self.n_members + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        src = np.empty(int(ptr[-1]), dtype=np.int64)
        dst = np.repeat(np.arange(self.n_members, dtype=np.int64), counts)
        self_pos = ptr[:-1]
        src[self_pos] = np.arange(self.n_members)
        other = np.ones(src.size, dtype=bool)
        other[self_pos] = False
        src[other] = nm + self.member_neighbor_jobs()
        out[MEMBER] = (ptr, src, dst)
        # job side: member neighbors precede self
        counts = self.job_degrees + 1
        ptr = np.zeros(self.n_jobs + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        src = np.empty(int(ptr[-1]), dtype=np.int64)
        dst = np.repeat(nm + np.arange(self.n_jobs, dtype=np.int64), counts)
        self_pos = ptr[1:] - 1
        src[self_pos] = nm + np.arange(self.n_jobs)
        other = np.ones(src.size, dtype=bool)
        other[self_pos] = False
        src[other] = self.job_neighbor_members()
        out[JOB] = (ptr, src, dst)
        return out

    # -- dense feature views -------------------------------------------------

    def _memo(self) -> dict:
        memo = self.__dict__.get("_dense_memo")
        if memo is None:
            memo = {}
            object.__setattr__(self, "_dense_memo", memo)
        return memo

    def dense(self, channel: str) -> np.ndarray:
        """(n, dim) multi-hot view; unobserved nodes are zero rows."""
        memo = self._memo()
        key = ("dense", channel)
        if key not in memo:
            spec = self.channel(channel)
            if spec.kind != MULTI_HOT:
                raise GraphOpError(f"dense() only applies to multi-hot channels, not {channel!r}")
            out = np.zeros((self.n_nodes, spec.dim), dtype=np.float64)
            obs = self.observed[channel]
            for i, row in enumerate(self.multihot[channel]):
                if obs[i] and row:
                    out[i, list(row)] = 1.0
            out.setflags(write=False)
            memo[key] = out
        return memo[key]

    def dense_full(self, channel: str) -> np.ndarray:
        """Like dense() but ignores observed flags; exposes held-back truth."""
        memo = self._memo()
        key = ("dense_full", channel)
        if key not in memo:
            spec = self.channel(channel)
            if spec.kind != MULTI_HOT:
                raise GraphOpError(f"dense_full() only applies to multi-hot channels, not {channel!r}")
            out = np.zeros((self.n_nodes, spec.dim), dtype=np.float64)
            for i, row in enumerate(self.multihot[channel]):
                if row:
                    out[i, list(row)] = 1.0
            out.setflags(write=False)
            memo[key] = out
        return memo[key]

    @cached_property
    def fully_missing(self) -> np.ndarray:
        """(n,) bool: unobserved on every channel."""
        out = np.ones(self.n_nodes, dtype=bool)
        for spec in self.channels:
            out &= ~self.observed[spec.name]
        return out


def observable_state(g: BipartiteGraph):
    """Canonical tuple of everything an input file can express; used for
    equality in round-trip tests. Hidden values of unobserved nodes are
    deliberately excluded."""
    chans = []
    for spec in g.channels:
        obs = g.observed[spec.name]
        if spec.kind == EMBEDDING:
            vals = tuple(int(v) if obs[i] else None for i, v in enumerate(g.lookup[spec.name]))
        else:
            vals = tuple(row if obs[i] else None for i, row in enumerate(g.multihot[spec.name]))
        chans.append((spec, obs.tobytes(), vals))
    return (g.member_ids, g.job_ids, tuple(chans), g.labels.tobytes(),
            g.edge_member.tobytes(), g.edge_job.tobytes())


# ---------------------------------------------------------------------------
# loading


def _parse_jsonl(path):
    try:
        fh = open(path)
    except OSError as e:
        raise GraphFormatError(f"cannot read {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise GraphFormatError(f"{path}:{lineno}: malformed JSON: {e}") from e


def load_graph(nodes_path, edges_path,
               channels: tuple[ChannelSpec, ...] | None = None) -> BipartiteGraph:
    """Load the node/edge JSONL pair into an indexed graph.

    Node records: {"id", "side", "title", "skills", "industries", "label"}.
    A null title together with empty index arrays marks the node unobserved
    on every channel. Edge records: {"member": id, "job": id}.
    """
    if channels is None:
        channels = default_channels()
    lookup_specs = [c for c in channels if c.kind == EMBEDDING]
    multihot_specs = [c for c in channels if c.kind == MULTI_HOT]

    member_index: dict[str, int] = {}
    job_index: dict[str, int] = {}
    rows = []
    for lineno, rec in _parse_jsonl(nodes_path):
        if not isinstance(rec, dict):
            raise GraphFormatError(f"{nodes_path}:{lineno}: node record must be an object")
        try:
            nid, side = rec["id"], rec["side"]
        except KeyError as e:
            raise GraphFormatError(f"{nodes_path}:{lineno}: missing key {e}") from e
        if not isinstance(nid, str):
            raise GraphFormatError(f"{nodes_path}:{lineno}: id must be a string")
        if side not in SIDES:
            raise GraphFormatError(f"{nodes_path}:{lineno}: side must be member or job")
        table = member_index if side == MEMBER else job_index
        if nid in table:
            raise GraphFormatError(f"{nodes_path}:{lineno}: duplicate node id {nid!r}")
        table[nid] = len(table)
        rows.append((lineno, rec, side))

    n_members, n_jobs = len(member_index), len(job_index)
    n = n_members + n_jobs
    lookup = {c.name: np.full(n, -1, dtype=np.int64) for c in lookup_specs}
    multihot = {c.name: [()] * n for c in multihot_specs}
    observed = {c.name: np.zeros(n, dtype=bool) for c in channels}
    labels = np.full(n, -1, dtype=np.int8)

    mseen = jseen = 0
    for lineno, rec, side in rows:
        if side == MEMBER:
            g_idx = mseen
            mseen += 1
        else:
            g_idx = n_members + jseen
            jseen += 1

        any_data = False
        for spec in lookup_specs:
            val = rec.get(spec.name)
            if val is not None:
                if not isinstance(val, int) or isinstance(val, bool) or val < 0:
                    raise GraphFormatError(
                        f"{nodes_path}:{lineno}: {spec.name} must be a non-negative integer or null")
                lookup[spec.name][g_idx] = val
                any_data = True
        for spec in multihot_specs:
            vals = rec.get(spec.name)
            if vals is None:
                vals = []
            if not isinstance(vals, list):
                raise GraphFormatError(f"{nodes_path}:{lineno}: {spec.name} must be an array")
            idxs = []
            for v in vals:
                if not isinstance(v, int) or isinstance(v, bool):
                    raise GraphFormatError(
                        f"{nodes_path}:{lineno}: {spec.name} entries must be integers")
                if not 0 <= v < spec.dim:
                    raise GraphFormatError(
                        f"{nodes_path}:{lineno}: {spec.name} index {v} out of range "
                        f"[0, {spec.dim})")
                idxs.append(v)
            if len(set(idxs)) != len(idxs):
                raise GraphFormatError(f"{nodes_path}:{lineno}: duplicate {spec.name} index")
            multihot[spec.name][g_idx] = tuple(sorted(idxs))
            if idxs:
                any_data = True

        for spec in channels:
            observed[spec.name][g_idx] = any_data

        label = rec.get("label")
        if label is not None:
            if label not in (0, 1):
                raise GraphFormatError(f"{nodes_path}:{lineno}: label must be 0, 1 or null")
            labels[g_idx] = label

    edges = []
    seen_edges = set()
    for lineno, rec in _parse_jsonl(edges_path):
        if not isinstance(rec, dict):
            raise GraphFormatError(f"{edges_path}:{lineno}: edge record must be an object")
        try:
            m, j = rec["member"], rec["job"]
        except KeyError as e:
            raise GraphFormatError(f"{edges_path}:{lineno}: missing key {e}") from e
        if m not in member_index:
            raise GraphFormatError(f"{edges_path}:{lineno}: unknown member id {m!r}")
        if j not in job_index:
            raise GraphFormatError(f"{edges_path}:{lineno}: unknown job id {j!r}")
        pair = (member_index[m], job_index[j])
        if pair in seen_edges:
            raise GraphFormatError(f"{edges_path}:{lineno}: duplicate edge {m!r} -- {j!r}")
        seen_edges.add(pair)
        edges.append(pair)

    member_ids = [None] * n_members
    for nid, idx in member_index.items():
        member_ids[idx] = nid
    job_ids = [None] * n_jobs
    for nid, idx in job_index.items():
        job_ids[idx] = nid

    return BipartiteGraph.build(
        member_ids=member_ids, job_ids=job_ids, channels=channels,
        lookup=lookup, multihot={k: tuple(v) for k, v in multihot.items()},
        observed=observed, labels=labels, edges=edges)


# ---------------------------------------------------------------------------
# operations


def neighbors(g: BipartiteGraph, node: NodeId) -> list[NodeId]:
    """Opposite-side neighbors in ascending index order."""
    g.global_index(node)  # validates
    if node.side == MEMBER:
        lo, hi = g.member_ptr[node.index], g.member_ptr[node.index + 1]
        return [NodeId(JOB, int(j)) for j in g.member_neighbor_jobs()[lo:hi]]
    lo, hi = g.job_ptr[node.index], g.job_ptr[node.index + 1]
    return [NodeId(MEMBER, int(m)) for m in g.job_neighbor_members()[lo:hi]]


def apply_missing_mask(g: BipartiteGraph, ratio: float, seed: int,
                       channel_names: tuple[str, ...] | None = None
                       ) -> tuple[BipartiteGraph, frozenset[NodeId]]:
    """Hide features of randomly chosen nodes; labels and edges untouched.

    Nodes that are already fully missing count toward the target, so the
    masker tops up until floor(ratio * n) nodes are fully missing; the
    returned set contains only the newly masked nodes. Feature values stay
    in memory (flags flip), which is what later restoration evaluation
    reads as ground truth; serialization drops them.

    channel_names restricts flag-flipping to a channel subset (ablation
    knob); such partially masked nodes do not count as fully missing.
    """
    if not 0.0 <= ratio <= 1.0:
        raise GraphOpError(f"missing ratio must be in [0, 1], got {ratio}")
    if channel_names is None:
        channel_names = tuple(spec.name for spec in g.channels)
    else:
        for name in channel_names:
            g.channel(name)

    n = g.n_nodes
    target = int(np.floor(ratio * n))
    already = int(g.fully_missing.sum())
    need = max(0, target - already)
    pool = np.flatnonzero(~g.fully_missing)
    if need > pool.size:
        need = pool.size
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(pool, size=need, replace=False)) if need else np.empty(0, np.int64)

    observed = {name: arr.copy() for name, arr in g.observed.items()}
    for name in channel_names:
        observed[name][chosen] = False
    for arr in observed.values():
        arr.setflags(write=False)

    masked = frozenset(
        NodeId(MEMBER, int(i)) if i < g.n_members else NodeId(JOB, int(i - g.n_members))
        for i in chosen)
    return replace(g, observed=observed), masked


def restrict_skill_space(g: BipartiteGraph, top_k: int,
                         channel: str = "skills") -> BipartiteGraph:
    """Keep the top_k most frequent features of a multi-hot channel.

    Frequency counts one per observed owning node; ties rank the lower
    original index first. Kept indices are remapped densely in original
    index order, so top_k == dim is the identity.
    """
    spec = g.channel(channel)
    if spec.kind != MULTI_HOT:
        raise GraphOpError(f"restrict_skill_space needs a multi-hot channel, not {channel!r}")
    if not 0 < top_k <= spec.dim:
        raise GraphOpError(f"top_k must be in [1, {spec.dim}], got {top_k}")

    counts = np.zeros(spec.dim, dtype=np.int64)
    obs = g.observed[channel]
    for i, row in enumerate(g.multihot[channel]):
        if obs[i] and row:
            counts[list(row)] += 1
    order = np.lexsort((np.arange(spec.dim), -counts))
    kept = np.sort(order[:top_k])
    remap = {int(old): new for new, old in enumerate(kept)}

    rows = tuple(
        tuple(remap[v] for v in row if v in remap)
        for row in g.multihot[channel])
    new_spec = replace(spec, dim=top_k)
    channels = tuple(new_spec if s.name == channel else s for s in g.channels)
    multihot = dict(g.multihot)
    multihot[channel] = rows
    return replace(g, channels=channels, multihot=multihot)


@dataclass(frozen=True)
class SplitAssignment:
    """Per-side split codes: 0 train, 1 val, 2 test, -1 unassigned."""

    member_split: np.ndarray
    job_split: np.ndarray

    def side_indices(self, side: str, split: str) -> np.ndarray:
        code = SPLIT_CODES[split]
        arr = self.member_split if side == MEMBER else self.job_split
        return np.flatnonzero(arr == code)

    def global_indices(self, split: str, n_members: int) -> np.ndarray:
        return np.concatenate([
            self.side_indices(MEMBER, split),
            n_members + self.side_indices(JOB, split),
        ])

    def counts(self) -> dict[str, dict[str, int]]:
        return {
            side: {name: int(self.side_indices(side, name).size) for name in SPLIT_CODES}
            for side in SIDES
        }


def _split_group(indices: np.ndarray, fractions, rng) -> list[np.ndarray]:
    perm = rng.permutation(indices)
    n = perm.size
    sizes = [int(np.floor(f * n)) for f in fractions]
    for i in range(n - sum(sizes)):
        sizes[i % len(sizes)] += 1
    parts, at = [], 0
    for s in sizes:
        parts.append(perm[at : at + s])
        at += s
    return parts


def split_nodes(g: BipartiteGraph, fractions, seed: int,
                stratify_by_label: bool = False) -> SplitAssignment:
    """Seed-deterministic train/val/test split of labeled nodes, per side.

    Fractions must sum to 1; floor sizes get the remainder distributed in
    train, val, test order, so realized counts match within one node per
    side. Unlabeled nodes are left out of every split.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise GraphOpError("fractions must be three non-negative numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise GraphOpError(f"fractions must sum to 1, got {sum(fractions)}")

    out = {}
    for side in SIDES:
        if side == MEMBER:
            labeled = np.flatnonzero(g.labels[: g.n_members] >= 0)
            side_labels = g.labels[: g.n_members]
            size = g.n_members
        else:
            labeled = np.flatnonzero(g.labels[g.n_members :] >= 0)
            side_labels = g.labels[g.n_members :]
            size = g.n_jobs
        if labeled.size < 3:
            raise GraphOpError(f"{side} side has {labeled.size} labeled nodes, need at least 3")
        assign = np.full(size, -1, dtype=np.int8)
        if stratify_by_label:
            groups = [labeled[side_labels[labeled] == y] for y in (0, 1)]
        else:
            groups = [labeled]
        for gi, group in enumerate(groups):
            rng = rng_for(seed, "split", side, gi)
            for code, part in enumerate(_split_group(group, fractions, rng)):
                assign[part] = code
        assign.setflags(write=False)
        out[side] = assign
    return SplitAssignment(member_split=out[MEMBER], job_split=out[JOB])
