"""Bipartite graph container, edge-list ingestion, holdout splits and walks.

Nodes of part A occupy global indices ``0..|A|-1`` and nodes of part B
occupy ``|A|..|A|+|B|-1``. Public operations speak ``NodeId``; the hot
loops in the sampler and trainer use the global indices directly.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from utils.errors import (
    BipartiteViolationError,
    EdgeListParseError,
    EmptyGraphError,
    NegativeExhaustionError,
    NoNegativesError,
    NoNeighborError,
    NodeLookupError,
    ParameterError,
)

logger = logging.getLogger(__name__)


class Part(str, Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Part":
        return Part.B if self is Part.A else Part.A


@dataclass(frozen=True, order=True)
class NodeId:
    index: int
    part: Part

    def __repr__(self):
        return f"{self.part.value}{self.index}"


class BipartiteGraph:
    """Immutable bipartite graph over dense per-part indices.

    ``edges`` holds one ``(a_index, b_index)`` row per edge, sorted and
    deduplicated. ``weights`` is optional and aligned with ``edges``.
    """

    def __init__(self, names_a: Sequence[str], names_b: Sequence[str], edges, weights=None):
        self.names_a = list(names_a)
        self.names_b = list(names_b)
        self.nodes_a = len(self.names_a)
        self.nodes_b = len(self.names_b)

        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (edges.shape[0],):
                raise ValueError("weights must align with edges")
        if edges.size:
            if edges[:, 0].min() < 0 or edges[:, 0].max() >= self.nodes_a:
                raise NodeLookupError("edge endpoint outside part A")
            if edges[:, 1].min() < 0 or edges[:, 1].max() >= self.nodes_b:
                raise NodeLookupError("edge endpoint outside part B")

        # Sort by (a, b) and drop repeated pairs, keeping the first weight seen
        codes = edges[:, 0] * max(self.nodes_b, 1) + edges[:, 1]
        codes, first = np.unique(codes, return_index=True)
        self.edges = edges[first]
        self.weights = weights[first] if weights is not None else None
        self._codes = codes

        n = self.num_nodes
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1] + self.nodes_a])
        cols = np.concatenate([self.edges[:, 1] + self.nodes_a, self.edges[:, 0]])
        adjacency = sparse.csr_matrix(
            (np.ones(rows.shape[0], dtype=np.float64), (rows, cols)), shape=(n, n)
        )
        adjacency.sort_indices()
        self.adjacency = adjacency
        self.indptr = adjacency.indptr
        self.indices = adjacency.indices
        self.degrees = np.diff(self.indptr)

        self._name_index = {}
        for i, name in enumerate(self.names_a):
            self._name_index[name] = NodeId(i, Part.A)
        for j, name in enumerate(self.names_b):
            self._name_index[name] = NodeId(j, Part.B)

    # -- sizes -------------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return self.nodes_a + self.nodes_b

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def __repr__(self):
        return f"BipartiteGraph(|A|={self.nodes_a}, |B|={self.nodes_b}, |E|={self.num_edges})"

    # -- id translation ----------------------------------------------------

    def global_index(self, node: NodeId) -> int:
        """Map a NodeId to its row in adjacency and coordinate tables"""
        size = self.nodes_a if node.part is Part.A else self.nodes_b
        if not 0 <= node.index < size:
            raise NodeLookupError(f"node {node!r} not in graph")
        return node.index if node.part is Part.A else self.nodes_a + node.index

    def node_at(self, gid: int) -> NodeId:
        if gid < self.nodes_a:
            return NodeId(int(gid), Part.A)
        return NodeId(int(gid) - self.nodes_a, Part.B)

    def part_of(self, gid: int) -> Part:
        return Part.A if gid < self.nodes_a else Part.B

    def part_range(self, part: Part) -> range:
        if part is Part.A:
            return range(0, self.nodes_a)
        return range(self.nodes_a, self.num_nodes)

    def name_of(self, node: NodeId) -> str:
        names = self.names_a if node.part is Part.A else self.names_b
        return names[node.index]

    def node_of(self, name: str) -> NodeId:
        try:
            return self._name_index[name]
        except KeyError:
            raise NodeLookupError(f"unknown node id {name!r}") from None

    @cached_property
    def global_names(self) -> list[str]:
        return self.names_a + self.names_b

    # -- structure ---------------------------------------------------------

    def neighbors(self, gid: int) -> np.ndarray:
        """Sorted global indices adjacent to ``gid``"""
        return self.indices[self.indptr[gid]:self.indptr[gid + 1]]

    def neighbor_nodes(self, node: NodeId) -> list[NodeId]:
        return [self.node_at(j) for j in self.neighbors(self.global_index(node))]

    def degree(self, node: NodeId) -> int:
        return int(self.degrees[self.global_index(node)])

    @cached_property
    def neighbor_sets(self) -> list[frozenset]:
        return [frozenset(self.neighbors(v).tolist()) for v in range(self.num_nodes)]

    def has_edge(self, a_index: int, b_index: int) -> bool:
        code = a_index * max(self.nodes_b, 1) + b_index
        pos = np.searchsorted(self._codes, code)
        return bool(pos < self._codes.shape[0] and self._codes[pos] == code)

    def edge_codes(self) -> np.ndarray:
        return self._codes

    def component_count(self) -> int:
        count, _ = connected_components(self.adjacency, directed=False)
        return int(count)

    def is_complete(self) -> bool:
        return self.num_edges == self.nodes_a * self.nodes_b

    def with_edges(self, mask) -> "BipartiteGraph":
        """Same node sets, keeping only the edges selected by ``mask``"""
        weights = self.weights[mask] if self.weights is not None else None
        return BipartiteGraph(self.names_a, self.names_b, self.edges[mask], weights)

    def edge_lines(self) -> list[str]:
        """Serialize as tab-separated edge-list lines"""
        lines = []
        for k, (a, b) in enumerate(self.edges):
            line = f"{self.names_a[a]}\t{self.names_b[b]}"
            if self.weights is not None:
                line += f"\t{self.weights[k]!r}"
            lines.append(line)
        return lines


@dataclass
class HoldoutSplit:
    training_graph: BipartiteGraph
    removed_edges: np.ndarray
    negative_edges: np.ndarray
    holdout_ratio: float
    seed: int


def from_named_edges(pairs: Iterable[tuple[str, str]], weights=None) -> BipartiteGraph:
    """Build a graph from ``(a_name, b_name)`` pairs, numbering nodes in first-seen order"""
    index_a, index_b = {}, {}
    edges = []
    for a_name, b_name in pairs:
        a = index_a.setdefault(a_name, len(index_a))
        b = index_b.setdefault(b_name, len(index_b))
        edges.append((a, b))
    return BipartiteGraph(list(index_a), list(index_b), edges, weights)


def load_edge_list(source: Iterable[str]) -> BipartiteGraph:
    """Parse ``a_id<TAB>b_id[<TAB>weight]`` lines into a BipartiteGraph"""
    pairs = []
    weights = []
    has_weights = False
    seen_a, seen_b = set(), set()

    for line_number, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue

        fields = line.split("\t")
        if len(fields) not in (2, 3) or not fields[0] or not fields[1]:
            raise EdgeListParseError(line_number, line)
        a_name, b_name = fields[0], fields[1]

        weight = 1.0
        if len(fields) == 3:
            try:
                weight = float(fields[2])
            except ValueError:
                raise EdgeListParseError(line_number, line, "weight is not a number") from None
            if not np.isfinite(weight):
                raise EdgeListParseError(line_number, line, "weight is not finite")
            has_weights = True

        if a_name in seen_b or b_name in seen_a or a_name == b_name:
            clash = a_name if (a_name in seen_b or a_name == b_name) else b_name
            raise BipartiteViolationError(
                f"line {line_number}: id {clash!r} appears in both columns"
            )
        seen_a.add(a_name)
        seen_b.add(b_name)
        pairs.append((a_name, b_name))
        weights.append(weight)

    graph = from_named_edges(pairs, weights if has_weights else None)
    logger.info("Loaded %r from %d lines", graph, len(pairs))
    return graph


def degree_prune(g: BipartiteGraph, min_degree: int) -> BipartiteGraph:
    """Iteratively drop nodes with degree below ``min_degree`` and relabel densely"""
    if min_degree < 0:
        raise ParameterError(f"min_degree must be >= 0, got {min_degree}")
    if min_degree == 0:
        return g

    alive_a = np.ones(g.nodes_a, dtype=bool)
    alive_b = np.ones(g.nodes_b, dtype=bool)
    rounds = 0
    while True:
        live_edges = alive_a[g.edges[:, 0]] & alive_b[g.edges[:, 1]]
        deg_a = np.bincount(g.edges[live_edges, 0], minlength=g.nodes_a)
        deg_b = np.bincount(g.edges[live_edges, 1], minlength=g.nodes_b)
        next_a = alive_a & (deg_a >= min_degree)
        next_b = alive_b & (deg_b >= min_degree)
        rounds += 1
        if np.array_equal(next_a, alive_a) and np.array_equal(next_b, alive_b):
            break
        alive_a, alive_b = next_a, next_b

    live_edges = alive_a[g.edges[:, 0]] & alive_b[g.edges[:, 1]]
    if not live_edges.any():
        raise EmptyGraphError(f"pruning to min_degree={min_degree} removed every edge")

    new_a = np.cumsum(alive_a) - 1
    new_b = np.cumsum(alive_b) - 1
    kept = g.edges[live_edges]
    edges = np.column_stack([new_a[kept[:, 0]], new_b[kept[:, 1]]])
    weights = g.weights[live_edges] if g.weights is not None else None
    pruned = BipartiteGraph(
        [n for n, keep in zip(g.names_a, alive_a) if keep],
        [n for n, keep in zip(g.names_b, alive_b) if keep],
        edges,
        weights,
    )
    logger.info("Pruned %r to %r in %d rounds", g, pruned, rounds)
    return pruned


def _still_connected(adj: list[set], source: int, target: int) -> bool:
    """BFS from source looking for target; bounded by source's component"""
    if not adj[source] or not adj[target]:
        return False
    seen = {source}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w == target:
                return True
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return False


def holdout_split(g: BipartiteGraph, h: float, seed: int) -> HoldoutSplit:
    """Remove each edge with probability h unless the removal splits a component"""
    if not 0.0 <= h <= 1.0:
        raise ParameterError(f"holdout ratio h must be in [0, 1], got {h}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(g.num_edges)
    coins = rng.random(g.num_edges)

    adj = [set(g.neighbors(v).tolist()) for v in range(g.num_nodes)]
    keep = np.ones(g.num_edges, dtype=bool)
    for position, e in enumerate(order):
        if coins[position] >= h:
            continue
        u = int(g.edges[e, 0])
        w = int(g.edges[e, 1]) + g.nodes_a
        adj[u].discard(w)
        adj[w].discard(u)
        if _still_connected(adj, u, w):
            keep[e] = False
        else:
            adj[u].add(w)
            adj[w].add(u)

    removed = g.edges[~keep]
    training_graph = g.with_edges(keep)

    available = g.nodes_a * g.nodes_b - g.num_edges
    count = removed.shape[0]
    if count > available:
        logger.warning(
            "Only %d non-edges exist for %d removed edges; negatives capped", available, count
        )
        count = available
    negatives = sample_negative_pairs(g, count, seed)

    logger.info(
        "Holdout h=%.2f seed=%d removed %d of %d edges", h, seed, removed.shape[0], g.num_edges
    )
    return HoldoutSplit(training_graph, removed, negatives, float(h), int(seed))


def sample_negative_pairs(g: BipartiteGraph, count: int, seed: int) -> np.ndarray:
    """Uniformly draw ``count`` distinct cross-part pairs absent from the graph"""
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)

    universe = g.nodes_a * g.nodes_b
    available = universe - g.num_edges
    if available == 0:
        raise NoNegativesError(f"{g!r} is complete bipartite; no negative pairs exist")
    if count > available:
        raise NegativeExhaustionError(f"requested {count} negatives but only {available} non-edges exist")

    rng = np.random.default_rng(seed)
    nb = max(g.nodes_b, 1)
    edge_codes = g.edge_codes()

    if count * 3 >= available:
        candidates = np.setdiff1d(np.arange(universe, dtype=np.int64), edge_codes, assume_unique=True)
        chosen = rng.choice(candidates, size=count, replace=False)
    else:
        taken = set()
        chosen = []
        while len(chosen) < count:
            draws = rng.integers(0, universe, size=2 * (count - len(chosen)) + 8)
            hits = np.isin(draws, edge_codes, assume_unique=False)
            for code, is_edge in zip(draws.tolist(), hits.tolist()):
                if is_edge or code in taken:
                    continue
                taken.add(code)
                chosen.append(code)
                if len(chosen) == count:
                    break
        chosen = np.asarray(chosen, dtype=np.int64)

    return np.column_stack([chosen // nb, chosen % nb]).astype(np.int64)


def walk(g: BipartiteGraph, gid: int, hops: int, rng: np.random.Generator) -> int:
    """Endpoint of a ``hops``-step uniform random walk from global index ``gid``"""
    indptr, indices = g.indptr, g.indices
    current = gid
    for _ in range(hops):
        start, stop = indptr[current], indptr[current + 1]
        if start == stop:
            raise NoNeighborError(f"node {g.node_at(current)!r} has no neighbors")
        current = int(indices[start + rng.integers(stop - start)])
    return current


def walks(g: BipartiteGraph, gid: int, hops: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Endpoints of ``size`` independent walks, advanced together one hop at a time"""
    current = np.full(size, gid, dtype=np.int64)
    for _ in range(hops):
        start = g.indptr[current]
        degree = g.indptr[current + 1] - start
        if (degree == 0).any():
            raise NoNeighborError(f"walk from {g.node_at(gid)!r} reached an isolated node")
        current = g.indices[start + rng.integers(0, degree)].astype(np.int64)
    return current


def khop_set(g: BipartiteGraph, gid: int, hops: int) -> np.ndarray:
    """Sorted global indices of Γ applied ``hops`` times to ``{gid}``"""
    frontier = np.array([gid], dtype=np.int64)
    for _ in range(hops):
        if frontier.size == 0:
            break
        frontier = np.unique(np.concatenate([g.neighbors(v) for v in frontier]))
    return frontier


def sample_khop(g: BipartiteGraph, v: NodeId, hops: int, rng, uniform: bool = False) -> NodeId:
    """Draw a node ``hops`` steps from ``v``; walk by default, uniform over the k-hop set on request"""
    if hops not in (1, 2, 3):
        raise ParameterError(f"hops must be 1, 2 or 3, got {hops}")
    gid = g.global_index(v)
    if g.degrees[gid] == 0:
        raise NoNeighborError(f"node {v!r} has no neighbors")
    if uniform:
        candidates = khop_set(g, gid, hops)
        return g.node_at(int(candidates[rng.integers(candidates.size)]))
    return g.node_at(walk(g, gid, hops, rng))


def bipartite_sbm(
    block_size_a: int,
    block_size_b: int,
    p_in: float,
    p_out: float,
    seed: int,
    blocks: int = 2,
) -> BipartiteGraph:
    """Planted-partition bipartite graph; node names are ``a<block>_<i>`` / ``b<block>_<j>``

    Isolated nodes are dropped, so node counts can fall slightly short of
    ``blocks * block_size``.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ParameterError("edge probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    block_a = np.repeat(np.arange(blocks), block_size_a)
    block_b = np.repeat(np.arange(blocks), block_size_b)
    probs = np.where(block_a[:, None] == block_b[None, :], p_in, p_out)
    hits = rng.random(probs.shape) < probs
    rows, cols = np.nonzero(hits)
    names_a = [f"a{block_a[i]}_{i}" for i in range(block_a.size)]
    names_b = [f"b{block_b[j]}_{j}" for j in range(block_b.size)]
    graph = from_named_edges((names_a[i], names_b[j]) for i, j in zip(rows, cols))
    if graph.num_edges == 0:
        raise EmptyGraphError("stochastic block model produced no edges")
    return graph


def block_of(name: str) -> int:
    """Planted block of a node generated by ``bipartite_sbm``"""
    return int(name[1:].split("_", 1)[0])
