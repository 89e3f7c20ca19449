"""Direct and auto-regularized combination of pre-trained embeddings.

Layer layout (per part, parameters never shared between A and B)::

    In(v) -> dropout -> Linear(d_in, h) -> ReLU -> Linear(h, k') -> tanh   = combined(v)
    combined(v) -> Linear(k', h) -> ReLU -> Linear(h, d_in)             = Out(v)   (AUTOREG)

The link head scores ``[combined(a), combined(b)]`` with
``Linear(2k', k') -> ReLU -> Linear(k', 1) -> sigmoid``.
``h = ceil((d_in + k') / 2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
import torch
from sklearn.preprocessing import StandardScaler
from torch import nn

from utils.errors import DivergenceError, ParameterError, ShapeError
from utils.graph_core import BipartiteGraph, NodeId
from utils.trainer import EmbeddingTable

logger = logging.getLogger(__name__)

NEGATIVES_PER_NODE = 5
RECONSTRUCTION_WEIGHT_LINK = 4.0
COMBINER_LEARNING_RATE = 0.01


class CombinerMode(str, Enum):
    DIRECT = "direct"
    AUTOREG = "autoreg"


@dataclass
class CombinerConfig:
    epochs: int = 10
    learning_rate: float = COMBINER_LEARNING_RATE
    adagrad_eps: float = 1e-8
    batch_size: int = 256
    dropout: float = 0.5
    seed: int = 0
    negatives_per_node: int = NEGATIVES_PER_NODE

    def validate(self):
        problems = []
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            problems.append(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            problems.append(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout must be in [0, 1), got {self.dropout}")
        if problems:
            raise ParameterError("; ".join(problems))
        return self


class CombinerOutput(NamedTuple):
    score: torch.Tensor
    out_a: torch.Tensor | None
    out_b: torch.Tensor | None
    combined_a: torch.Tensor
    combined_b: torch.Tensor


def hidden_size(input_dim: int, combined_dim: int) -> int:
    return math.ceil((input_dim + combined_dim) / 2)


def inverted_dropout(x: torch.Tensor, rate: float, generator: torch.Generator | None = None) -> torch.Tensor:
    """Zero entries with probability ``rate`` and rescale survivors by 1/(1-rate)"""
    if rate == 0.0:
        return x
    keep = torch.full_like(x, 1.0 - rate)
    mask = torch.bernoulli(keep, generator=generator)
    return x * mask / (1.0 - rate)


class CombinerModel(nn.Module):
    def __init__(self, input_dim: int, combined_dim: int, mode: CombinerMode = CombinerMode.DIRECT, dropout: float = 0.5):
        super().__init__()
        if input_dim < 1 or combined_dim < 1:
            raise ParameterError("input and combined dimensions must be >= 1")
        self.mode = CombinerMode(mode)
        self.input_dim = input_dim
        self.combined_dim = combined_dim
        self.hidden_dim = hidden_size(input_dim, combined_dim)
        self.dropout = dropout
        self.history: dict[str, list[float]] = {"loss": [], "link": [], "reconstruction": []}
        # Per-column standardization applied to raw concatenated inputs; identity until fitted
        self.register_buffer("input_mean", torch.zeros(input_dim))
        self.register_buffer("input_scale", torch.ones(input_dim))

        self.encoder_a = self._encoder()
        self.encoder_b = self._encoder()
        self.link_head = nn.Sequential(
            nn.Linear(2 * combined_dim, combined_dim),
            nn.ReLU(),
            nn.Linear(combined_dim, 1),
            nn.Sigmoid(),
        )
        if self.mode is CombinerMode.AUTOREG:
            self.decoder_a = self._decoder()
            self.decoder_b = self._decoder()

    def _encoder(self):
        return nn.Sequential(
            nn.Linear(self.input_dim, self.hidden_dim),
            nn.ReLU(),
            nn.Linear(self.hidden_dim, self.combined_dim),
            nn.Tanh(),
        )

    def _decoder(self):
        return nn.Sequential(
            nn.Linear(self.combined_dim, self.hidden_dim),
            nn.ReLU(),
            nn.Linear(self.hidden_dim, self.input_dim),
        )

    def fit_input_scaling(self, inputs: np.ndarray):
        scaler = StandardScaler().fit(inputs)
        with torch.no_grad():
            self.input_mean.copy_(torch.as_tensor(scaler.mean_))
            self.input_scale.copy_(torch.as_tensor(scaler.scale_))
        return self

    def standardize(self, inputs) -> torch.Tensor:
        inputs = torch.as_tensor(inputs, dtype=self.input_mean.dtype)
        return (inputs - self.input_mean) / self.input_scale

    def forward(self, in_a, in_b, generator=None) -> CombinerOutput:
        if in_a.shape[-1] != self.input_dim or in_b.shape[-1] != self.input_dim:
            raise ShapeError(
                f"expected inputs of dimension {self.input_dim}, got {in_a.shape[-1]} and {in_b.shape[-1]}"
            )
        rate = self.dropout if self.training else 0.0
        combined_a = self.encoder_a(inverted_dropout(in_a, rate, generator))
        combined_b = self.encoder_b(inverted_dropout(in_b, rate, generator))
        score = self.link_head(torch.cat([combined_a, combined_b], dim=-1)).squeeze(-1)
        out_a = out_b = None
        if self.mode is CombinerMode.AUTOREG:
            out_a = self.decoder_a(combined_a)
            out_b = self.decoder_b(combined_b)
        return CombinerOutput(score, out_a, out_b, combined_a, combined_b)


def concat_input(tables: list[EmbeddingTable], v: NodeId) -> np.ndarray:
    """Concatenate the node's vector from every table, in table order"""
    return np.concatenate([table.vector(v) for table in tables])


def concat_all(tables: list[EmbeddingTable], g: BipartiteGraph) -> np.ndarray:
    """concat_input for every node of g, rows in global-index order"""
    return np.vstack([concat_input(tables, g.node_at(gid)) for gid in range(g.num_nodes)])


def _draw_non_neighbors(rng, size: int, neighbors: frozenset, count: int) -> list[int]:
    available = size - len(neighbors)
    count = min(count, available)
    if count <= 0:
        return []
    if available <= 4 * count:
        pool = np.setdiff1d(np.arange(size), np.fromiter(neighbors, dtype=np.int64, count=len(neighbors)))
        return rng.choice(pool, size=count, replace=False).tolist()
    chosen = []
    while len(chosen) < count:
        candidate = int(rng.integers(size))
        if candidate not in neighbors and candidate not in chosen:
            chosen.append(candidate)
    return chosen


def build_combiner_training_set(g: BipartiteGraph, seed: int, negatives_per_node: int = NEGATIVES_PER_NODE):
    """All edges with target 1, plus per-node cross-part non-edges with target 0

    Returns ``(a_index, b_index, target)`` triples.
    """
    samples = [(int(a), int(b), 1.0) for a, b in g.edges]
    rng = np.random.default_rng(seed)
    short = 0
    for gid in range(g.num_nodes):
        # Non-neighbor candidates live in the opposite part's local index space
        if gid < g.nodes_a:
            local = frozenset((g.neighbors(gid) - g.nodes_a).tolist())
            drawn = _draw_non_neighbors(rng, g.nodes_b, local, negatives_per_node)
            samples.extend((gid, b, 0.0) for b in drawn)
        else:
            local = frozenset(g.neighbors(gid).tolist())
            drawn = _draw_non_neighbors(rng, g.nodes_a, local, negatives_per_node)
            samples.extend((a, gid - g.nodes_a, 0.0) for a in drawn)
        if len(drawn) < negatives_per_node:
            short += 1
    if short:
        logger.warning("%d nodes had fewer than %d non-neighbors; negatives capped", short, negatives_per_node)
    return samples


def loss_terms(mode: CombinerMode, output: CombinerOutput, targets, in_a, in_b):
    """Per-sample squared link error and (AUTOREG) summed reconstruction norms"""
    link = (targets - output.score) ** 2
    if CombinerMode(mode) is CombinerMode.DIRECT:
        return link, torch.zeros_like(link)
    recon = torch.linalg.vector_norm(in_a - output.out_a, dim=-1) + torch.linalg.vector_norm(in_b - output.out_b, dim=-1)
    return link, recon


def combiner_loss(mode: CombinerMode, output: CombinerOutput, targets, in_a, in_b) -> torch.Tensor:
    """DIRECT: mean squared link error. AUTOREG: mean of 4*link + ||In-Out|| for both parts"""
    link, recon = loss_terms(mode, output, targets, in_a, in_b)
    if CombinerMode(mode) is CombinerMode.DIRECT:
        return link.mean()
    return (RECONSTRUCTION_WEIGHT_LINK * link + recon).mean()


def combiner_forward(model: CombinerModel, in_a, in_b, training: bool = False, generator=None) -> CombinerOutput:
    """Single forward pass with dropout enabled only when ``training``"""
    model.train(training)
    in_a = torch.as_tensor(in_a, dtype=next(model.parameters()).dtype)
    in_b = torch.as_tensor(in_b, dtype=next(model.parameters()).dtype)
    if training:
        return model(in_a, in_b, generator)
    with torch.no_grad():
        return model(in_a, in_b)


def _evaluate(model, inputs, a_rows, b_rows, targets):
    model.eval()
    with torch.no_grad():
        in_a, in_b = inputs[a_rows], inputs[b_rows]
        output = model(in_a, in_b)
        link, recon = loss_terms(model.mode, output, targets, in_a, in_b)
        total = combiner_loss(model.mode, output, targets, in_a, in_b)
    return float(total), float(link.mean()), float(recon.mean())


def extract_combined(model: CombinerModel, raw_inputs, g: BipartiteGraph) -> EmbeddingTable:
    """Inference-mode per-part projection of every node's raw concatenated input"""
    model.eval()
    inputs = model.standardize(raw_inputs)
    with torch.no_grad():
        combined_a = model.encoder_a(inputs[: g.nodes_a])
        combined_b = model.encoder_b(inputs[g.nodes_a:])
    vectors = torch.cat([combined_a, combined_b]).double().numpy()
    return EmbeddingTable(vectors, g.nodes_a, g.global_names)


def train_combiner(
    tables: list[EmbeddingTable],
    g: BipartiteGraph,
    combined_dim: int,
    mode: CombinerMode = CombinerMode.DIRECT,
    config: CombinerConfig | None = None,
):
    """Fit the combination network by mini-batch Adagrad; returns (model, combined table)

    The network sees standardized inputs, so AUTOREG reconstructs the
    standardized concatenation.
    """
    config = (config or CombinerConfig()).validate()
    if combined_dim < 1:
        raise ParameterError(f"combined dimension must be >= 1, got {combined_dim}")

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    raw = concat_all(tables, g)
    model = CombinerModel(raw.shape[1], combined_dim, mode, config.dropout).fit_input_scaling(raw)
    inputs = model.standardize(raw)

    samples = build_combiner_training_set(g, config.seed, config.negatives_per_node)
    a_rows = torch.tensor([a for a, _, _ in samples], dtype=torch.long)
    b_rows = torch.tensor([b + g.nodes_a for _, b, _ in samples], dtype=torch.long)
    targets = torch.tensor([t for _, _, t in samples], dtype=torch.float32)

    optimizer = torch.optim.Adagrad(model.parameters(), lr=config.learning_rate, eps=config.adagrad_eps)
    total, link, recon = _evaluate(model, inputs, a_rows, b_rows, targets)
    model.history = {"loss": [total], "link": [link], "reconstruction": [recon]}
    logger.info("Combiner (%s, k'=%d) on %d samples, initial loss %.6f", model.mode.value, combined_dim, len(samples), total)

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = torch.randperm(len(samples), generator=generator)
        for start in range(0, len(samples), config.batch_size):
            index = order[start:start + config.batch_size]
            in_a, in_b = inputs[a_rows[index]], inputs[b_rows[index]]
            output = model(in_a, in_b, generator)
            loss = combiner_loss(model.mode, output, targets[index], in_a, in_b)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

        total, link, recon = _evaluate(model, inputs, a_rows, b_rows, targets)
        if not math.isfinite(total):
            raise DivergenceError(epoch, total)
        model.history["loss"].append(total)
        model.history["link"].append(link)
        model.history["reconstruction"].append(recon)
        logger.info("combiner epoch %d loss %.6f (link %.6f, reconstruction %.6f)", epoch, total, link, recon)

    table = extract_combined(model, raw, g)
    table.loss_trace = list(model.history["loss"])
    return model, table
