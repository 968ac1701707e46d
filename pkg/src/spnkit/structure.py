"""RAT-SPN topology construction.

A circuit over n binary variables is a mixture of r replicas. Each replica
is a balanced binary tree over a random permutation of the variables:
every tree leaf carries a fully connected sum layer over the variable's
indicator leaves (sector shape k x l), every internal tree node carries an
element-wise product layer followed by a sum layer (sector shape k x k),
and the replica root carries a single sum node (sector shape 1 x k). The
replica roots are mixed by one top-level sector of shape 1 x r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAF = "leaf"
INTERNAL = "internal"
ROOT = "root"
TOP = "top"


@dataclass(frozen=True)
class Sector:
    """One fully connected sum layer: a (rows x cols) block of mixture weights."""

    id: int
    kind: str
    rows: int
    cols: int
    replica: int  # -1 for the top-level mixture
    node: int     # global node id, -1 for the top-level mixture
    var: int | None = None  # original variable index, leaf sectors only

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(eq=False)
class Node:
    """One binary-tree node of a replica (global numbering across replicas)."""

    id: int
    replica: int
    kind: str
    var: int = -1        # leaf nodes only
    left: int = -1
    right: int = -1
    parent: int = -1
    height: int = 0
    n_leaves: int = 1
    sector: int = -1


@dataclass(eq=False)
class ReplicaTree:
    """Variable permutation plus the node-id range of one replica."""

    index: int
    permutation: np.ndarray
    root: int
    nodes: list[int]


@dataclass(eq=False)
class CircuitStructure:
    n: int
    k: int
    r: int
    l: int
    seed: int
    replicas: list[ReplicaTree]
    nodes: list[Node]
    sectors: list[Sector]
    # evaluation schedule, grouped for vectorized passes
    leaf_nodes: np.ndarray = field(default=None)   # node ids of all tree leaves
    leaf_vars: np.ndarray = field(default=None)    # original variable per leaf node
    levels: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default=None)
    root_nodes: np.ndarray = field(default=None)   # replica-root node ids, replica order
    root_left: np.ndarray = field(default=None)
    root_right: np.ndarray = field(default=None)

    @property
    def num_sectors(self) -> int:
        return len(self.sectors)

    @property
    def top_sector(self) -> Sector:
        return self.sectors[-1]

    def sector_of_node(self, node_id: int) -> Sector:
        return self.sectors[self.nodes[node_id].sector]


def build_structure(n: int, k: int, r: int, l: int = 2, seed: int = 0) -> CircuitStructure:
    """Build the full RAT-SPN topology for (n, k, r, l, seed).

    Deterministic: the per-replica permutations are drawn from child seeds
    spawned from the master seed, so the same inputs always give the same
    structure. Non-power-of-two n is handled by ceil/floor halving of the
    permuted variable list.
    """
    if n < 2:
        raise ValueError(f"need at least 2 variables for a binary split, got n={n}")
    if k < 1 or r < 1 or l < 1:
        raise ValueError(f"widths must be positive, got k={k}, r={r}, l={l}")

    child_seeds = np.random.SeedSequence(seed).spawn(r)
    nodes: list[Node] = []
    replicas: list[ReplicaTree] = []

    for rep in range(r):
        perm = np.random.default_rng(child_seeds[rep]).permutation(n)
        first = len(nodes)
        root = _build_tree(nodes, rep, perm.tolist())
        nodes[root].kind = ROOT
        replicas.append(ReplicaTree(rep, perm, root, list(range(first, len(nodes)))))

    sectors = _enumerate_sectors(nodes, replicas, k, r, l)
    struct = CircuitStructure(n, k, r, l, seed, replicas, nodes, sectors)
    _build_schedule(struct)
    return struct


def _build_tree(nodes: list[Node], rep: int, variables: list[int]) -> int:
    """Recursively split the permuted variable list; returns the subtree root id."""
    nid = len(nodes)
    if len(variables) == 1:
        nodes.append(Node(nid, rep, LEAF, var=variables[0]))
        return nid
    nodes.append(Node(nid, rep, INTERNAL, n_leaves=len(variables)))
    mid = (len(variables) + 1) // 2
    left = _build_tree(nodes, rep, variables[:mid])
    right = _build_tree(nodes, rep, variables[mid:])
    node = nodes[nid]
    node.left, node.right = left, right
    nodes[left].parent = nodes[right].parent = nid
    node.height = 1 + max(nodes[left].height, nodes[right].height)
    return nid


def _enumerate_sectors(nodes, replicas, k, r, l) -> list[Sector]:
    """Flat sector enumeration: post-order within each replica, top sector last."""
    sectors: list[Sector] = []

    def visit(nid: int) -> None:
        node = nodes[nid]
        if node.kind == LEAF:
            sec = Sector(len(sectors), LEAF, k, l, node.replica, nid, var=node.var)
        else:
            visit(node.left)
            visit(node.right)
            rows = 1 if node.kind == ROOT else k
            sec = Sector(len(sectors), node.kind, rows, k, node.replica, nid)
        node.sector = sec.id
        sectors.append(sec)

    for tree in replicas:
        visit(tree.root)
    sectors.append(Sector(len(sectors), TOP, 1, r, -1, -1))
    return sectors


def _build_schedule(struct: CircuitStructure) -> None:
    """Group nodes for vectorized evaluation: all leaves, then internal
    (non-root) nodes by ascending height, then the replica roots."""
    leaves = [nd for nd in struct.nodes if nd.kind == LEAF]
    struct.leaf_nodes = np.array([nd.id for nd in leaves], dtype=np.int64)
    struct.leaf_vars = np.array([nd.var for nd in leaves], dtype=np.int64)

    by_height: dict[int, list[Node]] = {}
    for nd in struct.nodes:
        if nd.kind == INTERNAL:
            by_height.setdefault(nd.height, []).append(nd)
    struct.levels = []
    for height in sorted(by_height):
        group = by_height[height]
        struct.levels.append((
            np.array([nd.id for nd in group], dtype=np.int64),
            np.array([nd.left for nd in group], dtype=np.int64),
            np.array([nd.right for nd in group], dtype=np.int64),
        ))
    struct.root_nodes = np.array([tree.root for tree in struct.replicas], dtype=np.int64)
    struct.root_left = np.array([struct.nodes[i].left for i in struct.root_nodes], dtype=np.int64)
    struct.root_right = np.array([struct.nodes[i].right for i in struct.root_nodes], dtype=np.int64)


def param_count(struct: CircuitStructure) -> int:
    """Total number of mixture-weight entries, top-level mixture included.

    For l=2 this is r*[(n-2)k^2 + (2n+1)k] + r.
    """
    return sum(sec.size for sec in struct.sectors)
