"""Deterministic derivation of independent random streams from one master seed.

Every stochastic consumer (generator, masker, splitter, init, dropout, ...)
names itself; the derived child seed depends only on (master, path), so adding
a new consumer never perturbs existing streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *path: object) -> int:
    """Stable 64-bit child seed for a named consumer under a master seed."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def rng_for(master: int, *path: object) -> np.random.Generator:
    """Generator seeded by derive_seed(master, *path)."""
    return np.random.default_rng(derive_seed(master, *path))
