"""Deterministic per-node random streams.

Every node draws from its own counter-based (Philox) stream keyed by
(run seed, node id), so adding or removing nodes mid-run never shifts
the draws seen by anyone else. Stream state is a plain dict, which makes
world snapshots exact and cheap.
"""

from __future__ import annotations

import copy

import numpy as np


def node_stream(seed: int, node_id: int) -> np.random.Generator:
    """Independent stream for one node of one run."""
    if seed < 0 or node_id < 0:
        raise ValueError("seed and node_id must be non-negative")
    key = np.array([seed, node_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def snapshot_state(rng: np.random.Generator) -> dict:
    return copy.deepcopy(rng.bit_generator.state)


def restore_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = copy.deepcopy(state)
