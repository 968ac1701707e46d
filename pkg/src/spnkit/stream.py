"""Memory-optimal streaming evaluation.

Each replica tree is evaluated by post-order traversal, materializing one
sector's weights at a time through a caller-supplied provider and freeing
child output vectors as soon as their parent is computed. Visiting the
larger subtree first keeps the number of simultaneously live k-vectors
at floor(log2 n) + 1 or below.
"""

from __future__ import annotations

import numpy as np

from .evaluate import MARGINALIZED, as_evidence, log_normalize_rows, lse_last
from .structure import LEAF, CircuitStructure
from .weights import WeightStore


def store_provider(store: WeightStore):
    """Sector provider backed by a fully materialized weight store."""
    return lambda sector_id: store[sector_id]


def stream_eval(
    struct: CircuitStructure,
    sector_provider,
    evidence,
) -> tuple[float, int]:
    """Evaluate one evidence row; returns (log-probability, peak live k-vectors).

    The value is bit-identical to eval_log_density on the same weights:
    every node applies the same log-sum-exp reduction in the same order,
    only the storage of intermediate vectors differs.
    """
    ev = as_evidence(evidence, struct.n)[0]
    cols = np.arange(struct.l) % 2

    live = 0
    peak = 0

    def leaf_values(var: int) -> np.ndarray:
        vals = np.zeros(2)
        if ev[var] != MARGINALIZED:
            vals[1 - ev[var]] = -np.inf
        return vals[cols]

    def log_weights(sector_id: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            logw = np.log(np.asarray(sector_provider(sector_id), dtype=np.float64))
        return log_normalize_rows(logw)

    def eval_node(nid: int) -> np.ndarray:
        nonlocal live, peak
        node = struct.nodes[nid]
        if node.kind == LEAF:
            out = lse_last(log_weights(node.sector) + leaf_values(node.var)[None, :])
        else:
            first, second = node.left, node.right
            if struct.nodes[second].n_leaves > struct.nodes[first].n_leaves:
                first, second = second, first
            v1 = eval_node(first)
            v2 = eval_node(second)
            out = lse_last(log_weights(node.sector) + (v1 + v2)[None, :])
            live -= 2
        live += 1
        peak = max(peak, live)
        return out

    root_vals = np.empty(struct.r)
    for rep, root in enumerate(struct.root_nodes):
        vec = eval_node(root)
        root_vals[rep] = vec[0]
        live -= 1  # only the scalar root value is carried forward

    top = log_weights(struct.top_sector.id)[0]
    return float(lse_last((top + root_vals)[None, :])[0]), peak
