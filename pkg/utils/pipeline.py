"""Embedding recipes shared by the CLI, the experiment drivers and the dashboard.

Each recipe takes a graph and a seed and returns an EmbeddingTable, so any
of them can be handed to ``run_link_experiment`` as an ``Embedder``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

from utils.algdist import DEFAULT_DAMPING, DEFAULT_ITERATIONS, DEFAULT_TRIALS, AlgebraicCoordinates, jor_relax
from utils.combiner import COMBINER_LEARNING_RATE, CombinerConfig, CombinerMode, train_combiner
from utils.graph_core import BipartiteGraph
from utils.sampler import (
    DEFAULT_GAMMA_SIZE,
    DEFAULT_NEGATIVE_RATIO,
    DEFAULT_SAMPLES_PER_NODE,
    fobe_sample_arrays,
    hobe_sample_arrays,
)
from utils.trainer import DEFAULT_DIMENSION, EmbeddingTable, KLForm, LossKind, TrainConfig, train

logger = logging.getLogger(__name__)


class Method(str, Enum):
    FOBE = "fobe"
    HOBE = "hobe"
    COMBINE_DIRECT = "combine-direct"
    COMBINE_AUTOREG = "combine-autoreg"


@dataclass
class EmbedParams:
    dimension: int = DEFAULT_DIMENSION
    samples_per_node: int = DEFAULT_SAMPLES_PER_NODE
    gamma_size: int = DEFAULT_GAMMA_SIZE
    negative_ratio: float = DEFAULT_NEGATIVE_RATIO
    trials: int = DEFAULT_TRIALS
    iterations: int = DEFAULT_ITERATIONS
    damping: float = DEFAULT_DAMPING
    epochs: int = 10
    learning_rate: float = 0.1
    batch_size: int = 256
    combined_dim: int | None = None
    combiner_epochs: int = 10
    combiner_learning_rate: float = COMBINER_LEARNING_RATE
    dropout: float = 0.5
    threads: int = 1
    uniform_khop: bool = False
    kl_form: KLForm = KLForm.OBSERVED
    progress: bool = False

    def train_config(self, loss: LossKind, seed: int) -> TrainConfig:
        return TrainConfig(
            dimension=self.dimension,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=seed,
            loss=loss,
            kl_form=self.kl_form,
            threads=self.threads,
            progress=self.progress,
        )


def embed_fobe(g: BipartiteGraph, seed: int = 0, params: EmbedParams | None = None) -> EmbeddingTable:
    params = params or EmbedParams()
    records = fobe_sample_arrays(
        g,
        params.samples_per_node,
        params.gamma_size,
        params.negative_ratio,
        seed,
        params.threads,
        params.uniform_khop,
    )
    return train(records, g, params.train_config(LossKind.FOBE_KL, seed))


def relax(g: BipartiteGraph, seed: int = 0, params: EmbedParams | None = None) -> AlgebraicCoordinates:
    params = params or EmbedParams()
    return jor_relax(g, params.trials, params.iterations, params.damping, seed)


def embed_hobe(
    g: BipartiteGraph,
    seed: int = 0,
    params: EmbedParams | None = None,
    coords: AlgebraicCoordinates | None = None,
) -> EmbeddingTable:
    """Relax (unless ``coords`` is given), sample with algebraic similarity, fit with MSE"""
    params = params or EmbedParams()
    coords = coords if coords is not None else relax(g, seed, params)
    records = hobe_sample_arrays(
        g,
        coords,
        params.samples_per_node,
        params.gamma_size,
        params.negative_ratio,
        seed,
        params.threads,
        params.uniform_khop,
    )
    return train(records, g, params.train_config(LossKind.HOBE_MSE, seed))


def combiner_config(params: EmbedParams, seed: int) -> CombinerConfig:
    return CombinerConfig(
        epochs=params.combiner_epochs,
        learning_rate=params.combiner_learning_rate,
        batch_size=params.batch_size,
        dropout=params.dropout,
        seed=seed,
    )


def embed_combined(
    g: BipartiteGraph,
    seed: int = 0,
    params: EmbedParams | None = None,
    mode: CombinerMode = CombinerMode.DIRECT,
    tables: list[EmbeddingTable] | None = None,
) -> EmbeddingTable:
    """Combine FOBE and HOBE tables; trains both first unless ``tables`` is given"""
    params = params or EmbedParams()
    if tables is None:
        tables = [embed_fobe(g, seed, params), embed_hobe(g, seed, params)]
    combined_dim = params.combined_dim or params.dimension
    _, table = train_combiner(tables, g, combined_dim, mode, combiner_config(params, seed))
    return table


def embed(
    method: Method,
    g: BipartiteGraph,
    seed: int = 0,
    params: EmbedParams | None = None,
    cache: TableCache | None = None,
) -> EmbeddingTable:
    method = Method(method)
    logger.info("Embedding %r with %s (seed %d)", g, method.value, seed)
    if method is Method.FOBE:
        return embed_fobe(g, seed, params)
    if method is Method.HOBE:
        return embed_hobe(g, seed, params)
    mode = CombinerMode.DIRECT if method is Method.COMBINE_DIRECT else CombinerMode.AUTOREG
    tables = None
    if cache is not None:
        tables = [cache.table(Method.FOBE, g, seed), cache.table(Method.HOBE, g, seed)]
    return embed_combined(g, seed, params, mode, tables)


class TableCache:
    """Tables already trained on the most recent graph, keyed by (method, seed)

    Combination methods pull their FOBE and HOBE inputs from here, so a
    link-experiment cell trains each base embedding once.
    """

    def __init__(self, params: EmbedParams | None = None):
        self.params = params or EmbedParams()
        self._graph = None
        self._tables: dict[tuple[Method, int], EmbeddingTable] = {}

    def table(self, method: Method, g: BipartiteGraph, seed: int) -> EmbeddingTable:
        if g is not self._graph:
            self._graph = g
            self._tables.clear()
        key = (Method(method), seed)
        if key not in self._tables:
            self._tables[key] = embed(method, g, seed, self.params, self)
        else:
            logger.debug("Reusing %s table for seed %d", key[0].value, seed)
        return self._tables[key]


def embedder(method: Method, params: EmbedParams | None = None, cache: TableCache | None = None):
    """An ``(graph, seed) -> EmbeddingTable`` callable for the experiment drivers"""
    method = Method(method)

    def run(g: BipartiteGraph, seed: int) -> EmbeddingTable:
        if cache is not None:
            return cache.table(method, g, seed)
        return embed(method, g, seed, params)

    return run


def embedders(methods, params: EmbedParams | None = None) -> dict:
    """Named embedders sharing one TableCache"""
    cache = TableCache(params)
    return {Method(m).value: embedder(m, params, cache) for m in methods}


def sweep_embedder(method: Method, params: EmbedParams | None = None):
    """Map a sampling rate s_r to an embedder with that rate"""
    params = params or EmbedParams()

    def for_rate(rate: int):
        return embedder(method, replace(params, samples_per_node=rate))

    return for_rate
