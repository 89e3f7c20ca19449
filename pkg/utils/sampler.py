"""FOBE and HOBE training-record sampling.

Each node draws ``s_r`` rounds. A round emits a same-part positive, a
cross-part positive with fixed neighborhood samples, and ``ceil(nu)``
zero-target negatives of each kind.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from utils.algdist import AlgebraicCoordinates, edge_similarities
from utils.errors import MalformedRecordError, ParameterError
from utils.graph_core import BipartiteGraph, NodeId, Part, khop_set, walks

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_NODE = 200
DEFAULT_GAMMA_SIZE = 5
DEFAULT_NEGATIVE_RATIO = 1.0
NEGATIVE_RETRIES = 20
MAX_BRIDGES = 10_000


class RecordKind(str, Enum):
    AA = "AA"
    BB = "BB"
    AB = "AB"


@dataclass(frozen=True)
class SampleRecord:
    kind: RecordKind
    left: NodeId
    right: NodeId
    gamma_left: tuple = ()
    gamma_right: tuple = ()
    target: float = 1.0


@dataclass
class RecordArrays:
    """Columnar form of a record list, indexed by global node index

    Gamma matrices are padded with -1; ``gamma_*_mask`` marks real entries.
    """

    kinds: np.ndarray
    left: np.ndarray
    right: np.ndarray
    gamma_left: np.ndarray
    gamma_right: np.ndarray
    targets: np.ndarray
    gamma_left_mask: np.ndarray = field(init=False)
    gamma_right_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gamma_left_mask = self.gamma_left >= 0
        self.gamma_right_mask = self.gamma_right >= 0

    def __len__(self):
        return int(self.targets.shape[0])

    @property
    def cross(self) -> np.ndarray:
        return self.kinds == 2

    def subset(self, index) -> "RecordArrays":
        return RecordArrays(
            self.kinds[index],
            self.left[index],
            self.right[index],
            self.gamma_left[index],
            self.gamma_right[index],
            self.targets[index],
        )

    @classmethod
    def concat(cls, parts, width: int = 1) -> "RecordArrays":
        """Stack record blocks in order; every block must share one gamma width"""
        if not parts:
            return cls(
                np.empty(0, dtype=np.int8),
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int64),
                np.empty((0, width), dtype=np.int64),
                np.empty((0, width), dtype=np.int64),
                np.empty(0, dtype=np.float64),
            )
        return cls(
            np.concatenate([p.kinds for p in parts]),
            np.concatenate([p.left for p in parts]),
            np.concatenate([p.right for p in parts]),
            np.concatenate([p.gamma_left for p in parts]),
            np.concatenate([p.gamma_right for p in parts]),
            np.concatenate([p.targets for p in parts]),
        )

    def to_records(self, node_at) -> list[SampleRecord]:
        """Back to SampleRecords; ``node_at`` maps a row index to a NodeId"""
        kinds = (RecordKind.AA, RecordKind.BB, RecordKind.AB)
        records = []
        for kind, left, right, gamma_left, gamma_right, target in zip(
            self.kinds.tolist(),
            self.left.tolist(),
            self.right.tolist(),
            self.gamma_left.tolist(),
            self.gamma_right.tolist(),
            self.targets.tolist(),
        ):
            records.append(SampleRecord(
                kinds[kind],
                node_at(left),
                node_at(right),
                tuple(node_at(v) for v in gamma_left if v >= 0),
                tuple(node_at(v) for v in gamma_right if v >= 0),
                target,
            ))
        return records

    @classmethod
    def from_records(cls, records, locate) -> "RecordArrays":
        """Build from SampleRecords; ``locate`` maps a NodeId to a row index"""
        kind_codes = {RecordKind.AA: 0, RecordKind.BB: 1, RecordKind.AB: 2}
        n = len(records)
        width = max((max(len(r.gamma_left), len(r.gamma_right)) for r in records), default=0)
        width = max(width, 1)
        kinds = np.empty(n, dtype=np.int8)
        left = np.empty(n, dtype=np.int64)
        right = np.empty(n, dtype=np.int64)
        gamma_left = np.full((n, width), -1, dtype=np.int64)
        gamma_right = np.full((n, width), -1, dtype=np.int64)
        targets = np.empty(n, dtype=np.float64)
        for k, record in enumerate(records):
            kinds[k] = kind_codes[record.kind]
            left[k] = locate(record.left)
            right[k] = locate(record.right)
            if record.kind is RecordKind.AB:
                if not record.gamma_left or not record.gamma_right:
                    raise MalformedRecordError(f"cross-part record {k} has an empty gamma set")
                gamma_left[k, :len(record.gamma_left)] = [locate(v) for v in record.gamma_left]
                gamma_right[k, :len(record.gamma_right)] = [locate(v) for v in record.gamma_right]
            targets[k] = record.target
        return cls(kinds, left, right, gamma_left, gamma_right, targets)


def _check_same_part(g: BipartiteGraph, i: NodeId, j: NodeId):
    if i.part is not j.part:
        raise TypeError(f"same-part observation needs nodes of one part, got {i!r} and {j!r}")
    return g.global_index(i), g.global_index(j)


def fobe_observe_same(g: BipartiteGraph, i: NodeId, j: NodeId) -> int:
    """1 if the two same-part nodes share a neighbor, else 0"""
    gi, gj = _check_same_part(g, i, j)
    return int(not g.neighbor_sets[gi].isdisjoint(g.neighbor_sets[gj]))


class HobeObserver:
    """Memoised second-order observations over one graph and coordinate table"""

    def __init__(self, g: BipartiteGraph, coords: AlgebraicCoordinates, similarities=None, seed: int = 0):
        self.g = g
        self.coords = coords
        self.similarities = similarities if similarities is not None else edge_similarities(g, coords)
        self.seed = seed
        self._same = {}
        self._cross = {}

    def edge_similarity(self, u: int, w: int) -> float:
        """s over an edge given two global indices in either order"""
        a, b = (u, w) if u < self.g.nodes_a else (w, u)
        return self.similarities[(a, b - self.g.nodes_a)]

    def same(self, gi: int, gj: int) -> float:
        key = (gi, gj) if gi <= gj else (gj, gi)
        cached = self._same.get(key)
        if cached is not None:
            return cached

        g = self.g
        bridges = np.intersect1d(g.neighbors(gi), g.neighbors(gj), assume_unique=True)
        if bridges.size > MAX_BRIDGES:
            rng = np.random.default_rng([self.seed, key[0], key[1]])
            bridges = rng.choice(bridges, size=MAX_BRIDGES, replace=False)
        best = 0.0
        for k in bridges.tolist():
            value = min(self.edge_similarity(gi, k), self.edge_similarity(gj, k))
            if value > best:
                best = value
        self._same[key] = best
        return best

    def cross(self, ga: int, gb: int) -> float:
        cached = self._cross.get((ga, gb))
        if cached is not None:
            return cached
        g = self.g
        best = 0.0
        for alpha in g.neighbors(gb).tolist():
            best = max(best, self.same(ga, alpha))
        for beta in g.neighbors(ga).tolist():
            best = max(best, self.same(gb, beta))
        self._cross[(ga, gb)] = best
        return best


def hobe_observe_same(g: BipartiteGraph, coords: AlgebraicCoordinates, i: NodeId, j: NodeId) -> float:
    """Strongest shared bridge: max over common neighbors k of min(s(i,k), s(j,k))"""
    gi, gj = _check_same_part(g, i, j)
    return HobeObserver(g, coords).same(gi, gj)


def hobe_observe_cross(g: BipartiteGraph, coords: AlgebraicCoordinates, i: NodeId, j: NodeId) -> float:
    """Strongest first-order link from i to j's neighbors or from j to i's neighbors"""
    if i.part is not Part.A or j.part is not Part.B:
        raise TypeError(f"cross-part observation needs (A, B) nodes, got {i!r} and {j!r}")
    return HobeObserver(g, coords).cross(g.global_index(i), g.global_index(j))


def _check_sampling_parameters(samples_per_node, gamma_size, negative_ratio):
    if samples_per_node < 1:
        raise ParameterError(f"s_r must be >= 1, got {samples_per_node}")
    if gamma_size < 1:
        raise ParameterError(f"s_gamma must be >= 1, got {gamma_size}")
    if negative_ratio < 0:
        raise ParameterError(f"negative ratio must be >= 0, got {negative_ratio}")


class _NodeSampler:
    """Per-node round generator shared by the FOBE and HOBE front ends

    Each node's rounds are drawn as whole columns: the ``s_r`` same-part
    positives, then the cross positives, then the two negative blocks.
    """

    def __init__(self, g, samples_per_node, gamma_size, negative_ratio, seed, uniform_khop, observer=None):
        self.g = g
        self.samples_per_node = samples_per_node
        self.gamma_size = gamma_size
        self.negatives = math.ceil(negative_ratio)
        self.seed = seed
        self.uniform_khop = uniform_khop
        self.observer = observer

    def _hops(self, gid, hops, rng, size):
        if self.uniform_khop:
            candidates = khop_set(self.g, gid, hops)
            return candidates[rng.integers(candidates.size, size=size)]
        return walks(self.g, gid, hops, rng, size)

    def _gammas(self, anchors, rng):
        g = self.g
        start = g.indptr[anchors][:, None]
        degree = g.degrees[anchors][:, None]
        return g.indices[start + rng.integers(0, degree, size=(anchors.size, self.gamma_size))].astype(np.int64)

    def _negatives(self, gid, rng, same_part):
        """First acceptable draw out of NEGATIVE_RETRIES per slot; slots with none are dropped"""
        g = self.g
        count = self.samples_per_node * self.negatives
        part = g.part_of(gid) if same_part else g.part_of(gid).other
        span = g.part_range(part)
        draws = span.start + rng.integers(len(span), size=(count, NEGATIVE_RETRIES))
        # Same-part nodes sharing a neighbor with gid are exactly its 2-hop set
        excluded = khop_set(g, gid, 2) if same_part else g.neighbors(gid)
        valid = (g.degrees[draws] > 0) & ~np.isin(draws, excluded)
        found = valid.any(axis=1)
        return draws[np.arange(count), valid.argmax(axis=1)][found]

    def _same_block(self, gid, partners, targets):
        g = self.g
        code = 0 if gid < g.nodes_a else 1
        n = partners.size
        padding = np.full((n, self.gamma_size), -1, dtype=np.int64)
        return RecordArrays(
            np.full(n, code, dtype=np.int8),
            np.full(n, gid, dtype=np.int64),
            partners.astype(np.int64),
            padding,
            padding.copy(),
            np.asarray(targets, dtype=np.float64),
        )

    def _cross_block(self, gid, partners, targets, rng):
        n = partners.size
        mine = np.full(n, gid, dtype=np.int64)
        a, b = (mine, partners) if gid < self.g.nodes_a else (partners, mine)
        # gamma_left holds A-nodes drawn from Γ(b); gamma_right holds B-nodes from Γ(a)
        gamma_left = self._gammas(b, rng)
        gamma_right = self._gammas(a, rng)
        return RecordArrays(
            np.full(n, 2, dtype=np.int8),
            a.astype(np.int64),
            b.astype(np.int64),
            gamma_left,
            gamma_right,
            np.asarray(targets, dtype=np.float64),
        )

    def same_targets(self, gid, partners):
        if self.observer is None:
            return np.ones(partners.size)
        return [self.observer.same(gid, p) for p in partners.tolist()]

    def cross_targets(self, gid, partners):
        if self.observer is None:
            return np.ones(partners.size)
        if gid < self.g.nodes_a:
            return [self.observer.cross(gid, p) for p in partners.tolist()]
        return [self.observer.cross(p, gid) for p in partners.tolist()]

    def sample_node(self, gid) -> RecordArrays | None:
        g = self.g
        if g.degrees[gid] == 0:
            logger.warning("Skipping isolated node %r", g.node_at(gid))
            return None

        rng = np.random.default_rng([self.seed, gid])
        rounds = self.samples_per_node
        cross_hops = 1 if self.observer is None else 3
        blocks = []

        partners = self._hops(gid, 2, rng, rounds)
        blocks.append(self._same_block(gid, partners, self.same_targets(gid, partners)))
        partners = self._hops(gid, cross_hops, rng, rounds)
        blocks.append(self._cross_block(gid, partners, self.cross_targets(gid, partners), rng))

        if self.negatives:
            others = self._negatives(gid, rng, same_part=True)
            blocks.append(self._same_block(gid, others, np.zeros(others.size)))
            others = self._negatives(gid, rng, same_part=False)
            blocks.append(self._cross_block(gid, others, np.zeros(others.size), rng))
        return RecordArrays.concat(blocks, self.gamma_size)

    def run(self, threads=1) -> RecordArrays:
        nodes = range(self.g.num_nodes)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_node = list(pool.map(self.sample_node, nodes))
        else:
            per_node = [self.sample_node(gid) for gid in nodes]
        # Node order canonicalises the output regardless of thread count
        return RecordArrays.concat([chunk for chunk in per_node if chunk is not None], self.gamma_size)


def fobe_sample_arrays(
    g: BipartiteGraph,
    samples_per_node: int = DEFAULT_SAMPLES_PER_NODE,
    gamma_size: int = DEFAULT_GAMMA_SIZE,
    negative_ratio: float = DEFAULT_NEGATIVE_RATIO,
    seed: int = 0,
    threads: int = 1,
    uniform_khop: bool = False,
) -> RecordArrays:
    """Direct and first-order observations with binary targets, in columnar form"""
    _check_sampling_parameters(samples_per_node, gamma_size, negative_ratio)
    sampler = _NodeSampler(g, samples_per_node, gamma_size, negative_ratio, seed, uniform_khop)
    arrays = sampler.run(threads)
    logger.info("FOBE sampling produced %d records from %r", len(arrays), g)
    return arrays


def hobe_sample_arrays(
    g: BipartiteGraph,
    coords: AlgebraicCoordinates,
    samples_per_node: int = DEFAULT_SAMPLES_PER_NODE,
    gamma_size: int = DEFAULT_GAMMA_SIZE,
    negative_ratio: float = DEFAULT_NEGATIVE_RATIO,
    seed: int = 0,
    threads: int = 1,
    uniform_khop: bool = False,
) -> RecordArrays:
    """Algebraic-similarity weighted observations up to second order, in columnar form"""
    _check_sampling_parameters(samples_per_node, gamma_size, negative_ratio)
    observer = HobeObserver(g, coords, seed=seed)
    sampler = _NodeSampler(g, samples_per_node, gamma_size, negative_ratio, seed, uniform_khop, observer)
    arrays = sampler.run(threads)
    logger.info("HOBE sampling produced %d records from %r", len(arrays), g)
    return arrays


def fobe_sample(g: BipartiteGraph, *args, **kwargs) -> list[SampleRecord]:
    """fobe_sample_arrays as a list of SampleRecords"""
    return fobe_sample_arrays(g, *args, **kwargs).to_records(g.node_at)


def hobe_sample(g: BipartiteGraph, coords: AlgebraicCoordinates, *args, **kwargs) -> list[SampleRecord]:
    """hobe_sample_arrays as a list of SampleRecords"""
    return hobe_sample_arrays(g, coords, *args, **kwargs).to_records(g.node_at)
