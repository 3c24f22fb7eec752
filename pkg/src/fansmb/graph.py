"""DAGs, Markov boundaries and moral graphs.

All indices are 0-based.
"""
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over ``d`` variables.

    ``edges`` is a frozenset of ``(parent, child)`` pairs. ``weights`` optionally
    maps each edge to a real coefficient. The topological order is computed (and
    cycles rejected) at construction time.
    """

    d: int
    edges: frozenset = frozenset()
    weights: dict = None
    order: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise GraphError(f"d must be >= 1, got {self.d}")
        edges = frozenset((int(p), int(c)) for p, c in self.edges)
        for p, c in edges:
            if not (0 <= p < self.d and 0 <= c < self.d):
                raise GraphError(f"edge ({p}, {c}) out of range for d={self.d}")
            if p == c:
                raise GraphError(f"self-loop on node {p}")
        object.__setattr__(self, "edges", edges)
        if self.weights is not None:
            weights = {(int(p), int(c)): float(w) for (p, c), w in self.weights.items()}
            extra = set(weights) - edges
            if extra:
                raise GraphError(f"weights given for non-edges: {sorted(extra)}")
            object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "order", _toposort(self.d, edges))

    def parents(self, i):
        return {p for p, c in self.edges if c == i}

    def children(self, i):
        return {c for p, c in self.edges if p == i}

    def adjacency(self):
        """Binary ``d x d`` matrix, ``A[parent, child] = 1``."""
        a = np.zeros((self.d, self.d), dtype=np.int64)
        for p, c in self.edges:
            a[p, c] = 1
        return a

    def weight_matrix(self):
        """``W[parent, child] = w``; raises if any edge lacks a weight."""
        w = np.zeros((self.d, self.d))
        for e in self.edges:
            if self.weights is None or e not in self.weights:
                raise GraphError(f"missing weight for edge {e}")
            w[e] = self.weights[e]
        return w

    @classmethod
    def from_adjacency(cls, adj, weights=None):
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {adj.shape}")
        edges = {(int(p), int(c)) for p, c in zip(*np.nonzero(adj))}
        w = None
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            w = {e: float(weights[e]) for e in edges}
        return cls(adj.shape[0], frozenset(edges), w)

    def with_weights(self, weights):
        return Dag(self.d, self.edges, dict(weights))


def _toposort(d, edges):
    indeg = [0] * d
    succ = [[] for _ in range(d)]
    for p, c in edges:
        indeg[c] += 1
        succ[p].append(c)
    ready = sorted(i for i in range(d) if indeg[i] == 0)
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for c in sorted(succ[i]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != d:
        raise GraphError("graph contains a directed cycle")
    return tuple(order)


@dataclass(frozen=True)
class MoralGraph:
    d: int
    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=np.int64)
        if adj.shape != (self.d, self.d):
            raise GraphError(f"adjacency shape {adj.shape} does not match d={self.d}")
        if not np.array_equal(adj, adj.T):
            raise GraphError("moral graph adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise GraphError("moral graph adjacency must have a zero diagonal")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    def __eq__(self, other):
        return isinstance(other, MoralGraph) and self.d == other.d and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash((self.d, self.adj.tobytes()))

    def edges(self):
        """Undirected edges as sorted ``(i, j)`` pairs with ``i < j``."""
        i, j = np.nonzero(np.triu(self.adj, 1))
        return {(int(a), int(b)) for a, b in zip(i, j)}


def markov_boundary_of(dag, target):
    """Parents, children and spouses (co-parents of children) of ``target``."""
    if not 0 <= target < dag.d:
        raise IndexError(f"target {target} out of range for d={dag.d}")
    parents = dag.parents(target)
    children = dag.children(target)
    spouses = set()
    for c in children:
        spouses |= dag.parents(c)
    mb = parents | children | spouses
    mb.discard(target)
    return mb


def moralize(dag):
    adj = np.zeros((dag.d, dag.d), dtype=np.int64)
    for i in range(dag.d):
        for j in markov_boundary_of(dag, i):
            adj[i, j] = 1
    return MoralGraph(dag.d, adj)


def moral_from_mbs(mb_map, d):
    """Symmetrized union of per-target boundaries as a moral graph."""
    adj = np.zeros((d, d), dtype=np.int64)
    for i, members in mb_map.items():
        if not 0 <= i < d:
            raise IndexError(f"target {i} out of range for d={d}")
        for j in members:
            if not 0 <= j < d:
                raise IndexError(f"member {j} out of range for d={d}")
            if i == j:
                continue
            adj[i, j] = adj[j, i] = 1
    return MoralGraph(d, adj)


def all_markov_boundaries(dag):
    return {i: markov_boundary_of(dag, i) for i in range(dag.d)}
