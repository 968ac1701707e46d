"""Ancestral sampling from a materialized circuit."""

from __future__ import annotations

import numpy as np

from .structure import LEAF, CircuitStructure
from .weights import WeightStore


def _choose(rng: np.random.Generator, probs: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Per-sample categorical draw: sample i uses probability row probs[rows[i]]."""
    cdf = np.cumsum(probs[rows], axis=1)
    u = rng.random(len(rows))
    return np.minimum((u[:, None] > cdf).sum(axis=1), probs.shape[1] - 1)


def sample(
    struct: CircuitStructure,
    weights: WeightStore,
    count: int,
    seed: int = 0,
) -> np.ndarray:
    """Draw `count` complete assignments, top-down.

    Each sample picks a replica from the top-level mixture, then descends
    its tree: at every sum node one child product is drawn from the node's
    mixture row, product nodes fan out into both children, and at a leaf
    sector the drawn indicator column fixes the variable's value.
    Deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    out = np.zeros((count, struct.n), dtype=np.int8)

    replica = _choose(rng, weights[struct.top_sector.id], np.zeros(count, dtype=np.int64))

    def descend(nid: int, rows: np.ndarray, ids: np.ndarray) -> None:
        node = struct.nodes[nid]
        chosen = _choose(rng, weights[node.sector], rows)
        if node.kind == LEAF:
            out[ids, node.var] = (chosen % 2).astype(np.int8)
        else:
            descend(node.left, chosen, ids)
            descend(node.right, chosen, ids)

    for rep, tree in enumerate(struct.replicas):
        ids = np.where(replica == rep)[0]
        if len(ids):
            descend(tree.root, np.zeros(len(ids), dtype=np.int64), ids)
    return out
