"""Shared graph builders.

Most suites need small graphs with mixed channel types; building them by
hand in every file drowns the actual assertions, so the factories live here.
"""

import numpy as np
import pytest

from jmmfr.graph import (
    EMBEDDING,
    MULTI_HOT,
    BipartiteGraph,
    ChannelSpec,
)


def _random_graph(seed, n_members=None, n_jobs=None, skill_dim=12,
                  with_title=True, p_edge=0.35, label_bias=0.7):
    rng = np.random.default_rng(seed)
    nm = int(n_members if n_members is not None else rng.integers(2, 10))
    nj = int(n_jobs if n_jobs is not None else rng.integers(2, 12))

    channels = [ChannelSpec("skills", MULTI_HOT, skill_dim, True)]
    if with_title:
        channels.append(ChannelSpec("title", EMBEDDING, 4, False))
    channels = tuple(channels)

    n = nm + nj
    multihot = {"skills": [tuple(np.flatnonzero(rng.random(skill_dim) < 0.3))
                           for _ in range(n)]}
    lookup = {}
    if with_title:
        lookup["title"] = [int(t) for t in rng.integers(0, 5, size=n)]
    observed = {spec.name: rng.random(n) < 0.9 for spec in channels}

    edges = [(u, v) for u in range(nm) for v in range(nj)
             if rng.random() < p_edge]
    if not edges:
        edges = [(0, 0)]
    labels = (rng.random(n) < label_bias).astype(np.int8)

    return BipartiteGraph.build(
        member_ids=tuple(f"m{i}" for i in range(nm)),
        job_ids=tuple(f"j{i}" for i in range(nj)),
        channels=channels,
        lookup=lookup,
        multihot=multihot,
        observed=observed,
        labels=labels,
        edges=edges,
    )


@pytest.fixture
def make_graph():
    """Factory for random small graphs, deterministic in its seed argument."""
    return _random_graph


@pytest.fixture
def tiny_graph():
    """Fixed 2x3 graph with one masked member; hand-checkable numbers."""
    channels = (ChannelSpec("skills", MULTI_HOT, 6, True),
                ChannelSpec("title", EMBEDDING, 4, False))
    observed = {
        "skills": np.array([True, False, True, True, True]),
        "title": np.array([True, False, True, True, False]),
    }
    return BipartiteGraph.build(
        member_ids=("m0", "m1"),
        job_ids=("j0", "j1", "j2"),
        channels=channels,
        lookup={"title": [0, -1, 1, 2, -1]},
        multihot={"skills": [(0, 1), (), (1, 2), (3,), (4, 5)]},
        observed=observed,
        labels=np.array([1, 0, 1, 0, 1], dtype=np.int8),
        edges=[(0, 0), (0, 1), (1, 1), (1, 2)],
    )
