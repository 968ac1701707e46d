"""Exact log-space circuit evaluation and its reverse-mode gradient.

Evidence is encoded per variable as 0 (observed false), 1 (observed true),
or MARGINALIZED (-1). Evaluation runs bottom-up over the binary trees in
log space, vectorized over the evidence batch and over same-height nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroProbabilityError
from .structure import CircuitStructure
from .weights import WeightStore

MARGINALIZED = -1

NEG_INF = -np.inf


def lse_last(t: np.ndarray) -> np.ndarray:
    """log-sum-exp over the last axis; rows that are all -inf give -inf."""
    m = np.max(t, axis=-1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.sum(np.exp(t - safe[..., None]), axis=-1))


def log_normalize_rows(logw: np.ndarray) -> np.ndarray:
    """Nudge log-weight rows until lse_last over each row is bitwise 0.0.

    Row sums of the linear weights are 1 only up to rounding; evaluating a
    fully marginalized query folds that residual into the output. Fixing
    the rows at the log-sum-exp used by the evaluator makes normalization
    exact (a marginal over everything is exactly log 1 = 0.0).
    """
    out = np.array(logw, dtype=np.float64)
    for _ in range(4):
        c = lse_last(out)
        if not c.any():
            break
        out -= c[..., None]
    return out


def as_evidence(evidence, n: int) -> np.ndarray:
    """Validate and coerce evidence to an int (B, n) array of {-1, 0, 1}."""
    ev = np.asarray(evidence)
    if ev.ndim == 1:
        ev = ev[None, :]
    if ev.ndim != 2 or ev.shape[1] != n:
        raise ValueError(f"evidence must have {n} columns, got shape {ev.shape}")
    ev = ev.astype(np.int64)
    bad = ~np.isin(ev, (MARGINALIZED, 0, 1))
    if bad.any():
        raise ValueError("evidence entries must be 0, 1, or -1 (marginalized)")
    return ev


def full_marginal(n: int) -> np.ndarray:
    return np.full(n, MARGINALIZED, dtype=np.int64)


@dataclass(eq=False)
class GroupLogWeights:
    """Log mixture weights stacked in evaluation-schedule order."""

    leaf: np.ndarray                 # (num_leaf_nodes, k, l)
    levels: list[np.ndarray]         # per height: (m, k, k)
    root: np.ndarray                 # (r, k)
    top: np.ndarray                  # (r,)

    @classmethod
    def from_store(cls, struct: CircuitStructure, store: WeightStore) -> "GroupLogWeights":
        logm = store.log_matrices
        sec = lambda nid: struct.nodes[nid].sector
        leaf = log_normalize_rows(np.stack([logm[sec(nid)] for nid in struct.leaf_nodes]))
        levels = [
            log_normalize_rows(np.stack([logm[sec(nid)] for nid in ids]))
            for ids, _, _ in struct.levels
        ]
        root = log_normalize_rows(np.stack([logm[sec(nid)][0] for nid in struct.root_nodes]))
        return cls(leaf, levels, root, log_normalize_rows(logm[-1])[0])


@dataclass(eq=False)
class Forward:
    """Cached forward pass: everything the backward pass needs."""

    leaf_vals: np.ndarray    # (num_leaf_nodes, B, l) leaf-indicator log-values
    buf: np.ndarray          # (num_nodes, B, k) per-node sum-layer outputs
    root_vals: np.ndarray    # (r, B) replica-root log-values
    log_density: np.ndarray  # (B,)


def leaf_log_values(struct: CircuitStructure, ev: np.ndarray) -> np.ndarray:
    """Log value of each indicator leaf under the evidence: (B, n, l).

    Leaf column j of a variable is the indicator [X = j mod 2]; a
    marginalized variable makes every indicator integrate to 1.
    """
    B = ev.shape[0]
    m = np.zeros((B, struct.n, 2))
    m[..., 0][ev == 1] = NEG_INF
    m[..., 1][ev == 0] = NEG_INF
    cols = np.arange(struct.l) % 2
    return m[:, :, cols]


def forward(struct: CircuitStructure, lw: GroupLogWeights, ev: np.ndarray) -> Forward:
    B = ev.shape[0]
    vals = leaf_log_values(struct, ev)
    # (num_leaf_nodes, B, l): leaf values routed to each replica's leaves
    leaf_vals = np.ascontiguousarray(vals[:, struct.leaf_vars, :].transpose(1, 0, 2))

    buf = np.empty((len(struct.nodes), B, struct.k))
    buf[struct.leaf_nodes] = lse_last(lw.leaf[:, None, :, :] + leaf_vals[:, :, None, :])
    for (ids, left, right), level_lw in zip(struct.levels, lw.levels):
        p = buf[left] + buf[right]
        buf[ids] = lse_last(level_lw[:, None, :, :] + p[:, :, None, :])

    p = buf[struct.root_left] + buf[struct.root_right]
    root_vals = lse_last(lw.root[:, None, :] + p)                       # (r, B)
    log_density = lse_last(lw.top[None, :] + root_vals.T)               # (B,)
    return Forward(leaf_vals, buf, root_vals, log_density)


def _posterior(t: np.ndarray, out: np.ndarray) -> np.ndarray:
    """exp(t - out[..., None]) with zero where the output was -inf."""
    safe = np.where(np.isfinite(out), out, 0.0)
    post = np.exp(t - safe[..., None])
    return np.where(np.isfinite(out)[..., None], post, 0.0)


def backward(
    struct: CircuitStructure,
    lw: GroupLogWeights,
    fwd: Forward,
    grad_out: np.ndarray,
) -> GroupLogWeights:
    """Gradient of sum_b grad_out[b] * log_density[b] w.r.t. the log weights.

    Returned gradients treat every log-weight entry as a free parameter;
    callers compose with the softmax Jacobian for logit parameterizations.
    """
    q = _posterior(lw.top[None, :] + fwd.root_vals.T, fwd.log_density)  # (B, r)
    d_top = grad_out @ q                                                # (r,)
    g_root = (grad_out[:, None] * q).T                                  # (r, B)

    gbuf = np.zeros_like(fwd.buf)
    left, right = struct.root_left, struct.root_right
    p = fwd.buf[left] + fwd.buf[right]
    s = _posterior(lw.root[:, None, :] + p, fwd.root_vals)              # (r, B, k)
    d_root = np.einsum("sb,sbc->sc", g_root, s)
    dp = g_root[:, :, None] * s
    gbuf[left] += dp
    gbuf[right] += dp

    d_levels: list[np.ndarray] = [None] * len(struct.levels)
    for idx in range(len(struct.levels) - 1, -1, -1):
        ids, lft, rgt = struct.levels[idx]
        g = gbuf[ids]                                                   # (m, B, k)
        p = fwd.buf[lft] + fwd.buf[rgt]
        t = lw.levels[idx][:, None, :, :] + p[:, :, None, :]
        s = _posterior(t, fwd.buf[ids])                                 # (m, B, k, k)
        d_levels[idx] = np.einsum("sbr,sbrc->src", g, s)
        dp = np.einsum("sbr,sbrc->sbc", g, s)
        gbuf[lft] += dp
        gbuf[rgt] += dp

    g = gbuf[struct.leaf_nodes]
    t = lw.leaf[:, None, :, :] + fwd.leaf_vals[:, :, None, :]
    s = _posterior(t, fwd.buf[struct.leaf_nodes])
    d_leaf = np.einsum("sbr,sbrc->src", g, s)

    return GroupLogWeights(d_leaf, d_levels, d_root, d_top)


def eval_log_density(struct: CircuitStructure, weights: WeightStore, evidence):
    """Per-instance log-probability of (possibly partial) evidence.

    Accepts a single evidence row or a batch; returns a float or a (B,)
    array correspondingly.
    """
    single = np.asarray(evidence).ndim == 1
    ev = as_evidence(evidence, struct.n)
    lw = GroupLogWeights.from_store(struct, weights)
    out = forward(struct, lw, ev).log_density
    return float(out[0]) if single else out


def conditional_log(struct: CircuitStructure, weights: WeightStore, query, condition) -> float:
    """log P(query | condition) = log P(query, condition) - log P(condition)."""
    q = as_evidence(query, struct.n)[0]
    c = as_evidence(condition, struct.n)[0]
    conflict = (q != MARGINALIZED) & (c != MARGINALIZED) & (q != c)
    if conflict.any():
        raise ValueError(
            f"query and condition disagree on variables {np.where(conflict)[0].tolist()}"
        )
    denom = eval_log_density(struct, weights, c)
    if denom == NEG_INF:
        raise ZeroProbabilityError("conditioning event has probability zero")
    joint = np.where(q != MARGINALIZED, q, c)
    return eval_log_density(struct, weights, joint) - denom
