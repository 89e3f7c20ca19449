"""Embedding training for FOBE (sigmoid, KL loss) and HOBE (ReLU, MSE loss).

Gradients are derived by hand and applied with sparse Adagrad: only rows
touched by a batch are updated.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.special import expit
from tqdm import tqdm

from utils.errors import DivergenceError, MalformedRecordError, NodeLookupError, ParameterError
from utils.graph_core import BipartiteGraph, NodeId, Part
from utils.sampler import RecordArrays, RecordKind, SampleRecord

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 100
SIGMOID_EDGE = np.finfo(np.float64).eps
# expit beyond this magnitude is already within SIGMOID_EDGE of 0 or 1
SIGMOID_INPUT_LIMIT = 40.0


class LossKind(str, Enum):
    FOBE_KL = "fobe_kl"
    HOBE_MSE = "hobe_mse"


class KLForm(str, Enum):
    # KL(observed || estimated); binary cross-entropy up to a constant
    OBSERVED = "observed"
    # KL(estimated || observed), the weighting as printed
    PRINTED = "printed"


@dataclass
class TrainConfig:
    dimension: int = DEFAULT_DIMENSION
    epochs: int = 10
    learning_rate: float = 0.1
    adagrad_eps: float = 1e-8
    prob_floor: float = 1e-6
    batch_size: int = 256
    seed: int = 0
    loss: LossKind = LossKind.FOBE_KL
    kl_form: KLForm = KLForm.OBSERVED
    threads: int = 1
    progress: bool = False

    def validate(self):
        problems = []
        if self.dimension < 1:
            problems.append(f"dimension must be >= 1, got {self.dimension}")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            problems.append(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0 < self.prob_floor < 0.5:
            problems.append(f"probability floor must be in (0, 0.5), got {self.prob_floor}")
        if self.batch_size < 1:
            problems.append(f"batch size must be >= 1, got {self.batch_size}")
        if problems:
            raise ParameterError("; ".join(problems))
        return self


@dataclass
class EmbeddingTable:
    """Row ``v`` of ``vectors`` embeds the node with global index ``v``"""

    vectors: np.ndarray
    nodes_a: int
    names: list[str] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def num_nodes(self) -> int:
        return int(self.vectors.shape[0])

    def row(self, node: NodeId) -> int:
        size = self.nodes_a if node.part is Part.A else self.num_nodes - self.nodes_a
        if not 0 <= node.index < size:
            raise NodeLookupError(f"node {node!r} not in embedding table")
        return node.index if node.part is Part.A else self.nodes_a + node.index

    def vector(self, node: NodeId) -> np.ndarray:
        return self.vectors[self.row(node)]

    def __contains__(self, node: NodeId) -> bool:
        try:
            self.row(node)
        except NodeLookupError:
            return False
        return True

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vectors.copy(), self.nodes_a, list(self.names), list(self.loss_trace))


@dataclass
class AdagradState:
    accumulated: np.ndarray

    @classmethod
    def like(cls, table: EmbeddingTable) -> "AdagradState":
        return cls(np.zeros_like(table.vectors))

    def step(self, vectors, rows, grads, learning_rate, eps):
        """Accumulate squared gradients for ``rows`` and apply the scaled step"""
        self.accumulated[rows] += grads * grads
        vectors[rows] -= learning_rate * grads / np.sqrt(self.accumulated[rows] + eps)


def init_embeddings(g: BipartiteGraph, dimension: int, seed: int) -> EmbeddingTable:
    """Uniform entries in [-1/(2r), 1/(2r)]"""
    if dimension < 1:
        raise ParameterError(f"dimension must be >= 1, got {dimension}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / (2 * dimension)
    vectors = rng.uniform(-bound, bound, size=(g.num_nodes, dimension))
    return EmbeddingTable(vectors, g.nodes_a, g.global_names)


# -- estimators -------------------------------------------------------------


def _sigmoid(x):
    # Strictly inside (0, 1) even where expit rounds to an endpoint
    x = np.clip(x, -SIGMOID_INPUT_LIMIT, SIGMOID_INPUT_LIMIT)
    return np.clip(expit(x), SIGMOID_EDGE, 1.0 - SIGMOID_EDGE)


def _activation(loss: LossKind):
    """Activation and its derivative expressed through (input, output)"""
    if loss is LossKind.FOBE_KL:
        return _sigmoid, lambda x, y: y * (1.0 - y)
    return (lambda x: np.maximum(x, 0.0)), (lambda x, y: (x > 0).astype(np.float64))


def _forward(vectors, batch: RecordArrays, loss: LossKind):
    """Estimates for every record plus the intermediates the backward pass needs"""
    act, _ = _activation(loss)
    estimate = np.empty(len(batch))
    cache = {}

    same = ~batch.cross
    if same.any():
        x = np.einsum("nd,nd->n", vectors[batch.left[same]], vectors[batch.right[same]])
        y = act(x)
        estimate[same] = y
        cache["same"] = (np.nonzero(same)[0], x, y)

    cross = batch.cross
    if cross.any():
        idx = np.nonzero(cross)[0]
        sides = []
        means = []
        for anchor, gamma, mask in (
            (batch.left[idx], batch.gamma_left[idx], batch.gamma_left_mask[idx]),
            (batch.right[idx], batch.gamma_right[idx], batch.gamma_right_mask[idx]),
        ):
            counts = mask.sum(axis=1)
            if (counts == 0).any():
                raise MalformedRecordError("cross-part record with an empty gamma set")
            safe = np.where(mask, gamma, 0)
            x = np.einsum("nd,nkd->nk", vectors[anchor], vectors[safe])
            y = act(x) * mask
            mean = y.sum(axis=1) / counts
            sides.append((anchor, safe, mask, counts, x, y))
            means.append(mean)
        estimate[idx] = means[0] * means[1]
        cache["cross"] = (idx, sides, means)

    return estimate, cache


def fobe_estimate(table: EmbeddingTable, record: SampleRecord) -> float:
    """Sigmoid estimate of a single record"""
    return _single_estimate(table, record, LossKind.FOBE_KL)


def hobe_estimate(table: EmbeddingTable, record: SampleRecord) -> float:
    """ReLU estimate of a single record"""
    return _single_estimate(table, record, LossKind.HOBE_MSE)


def _single_estimate(table, record, loss):
    if record.kind is RecordKind.AB and (not record.gamma_left or not record.gamma_right):
        raise MalformedRecordError("cross-part record with an empty gamma set")
    batch = _table_arrays([record], table)
    estimate, _ = _forward(table.vectors, batch, loss)
    return float(estimate[0])


def _table_arrays(records, table: EmbeddingTable) -> RecordArrays:
    return RecordArrays.from_records(records, table.row)


# -- losses -----------------------------------------------------------------


def _loss_terms(estimate, targets, config: TrainConfig):
    """Per-record loss and dL/d(estimate) before averaging"""
    if config.loss is LossKind.HOBE_MSE:
        residual = targets - estimate
        return residual * residual, -2.0 * residual

    floor = config.prob_floor
    t = np.clip(targets, floor, 1.0 - floor)
    p = np.clip(estimate, floor, 1.0 - floor)
    inside = (estimate > floor) & (estimate < 1.0 - floor)
    if config.kl_form is KLForm.PRINTED:
        values = p * np.log(p / t) + (1.0 - p) * np.log((1.0 - p) / (1.0 - t))
        slope = np.log(p / t) - np.log((1.0 - p) / (1.0 - t))
    else:
        values = t * np.log(t / p) + (1.0 - t) * np.log((1.0 - t) / (1.0 - p))
        slope = -t / p + (1.0 - t) / (1.0 - p)
    return values, np.where(inside, slope, 0.0)


def batch_loss(vectors, batch: RecordArrays, config: TrainConfig) -> float:
    estimate, _ = _forward(vectors, batch, config.loss)
    values, _ = _loss_terms(estimate, batch.targets, config)
    return float(values.mean())


def fobe_loss(table: EmbeddingTable, batch, prob_floor: float = 1e-6, kl_form: KLForm = KLForm.OBSERVED) -> float:
    """Mean clamped Bernoulli KL divergence between targets and sigmoid estimates"""
    arrays = batch if isinstance(batch, RecordArrays) else _table_arrays(batch, table)
    config = TrainConfig(loss=LossKind.FOBE_KL, prob_floor=prob_floor, kl_form=kl_form)
    return batch_loss(table.vectors, arrays, config)


def hobe_loss(table: EmbeddingTable, batch) -> float:
    """Mean squared error between targets and ReLU estimates"""
    arrays = batch if isinstance(batch, RecordArrays) else _table_arrays(batch, table)
    return batch_loss(table.vectors, arrays, TrainConfig(loss=LossKind.HOBE_MSE))


def _scatter_rows(target, positions, values):
    """target[positions[i]] += values[i], summing repeated positions"""
    n = positions.shape[0]
    if n == 0:
        return
    spread = sparse.csr_matrix((np.ones(n), (positions, np.arange(n))), shape=(target.shape[0], n))
    target += spread @ values


def loss_and_gradient(vectors, batch: RecordArrays, config: TrainConfig):
    """Mean loss, touched rows, and the gradient restricted to those rows"""
    _, act_grad = _activation(config.loss)
    estimate, cache = _forward(vectors, batch, config.loss)
    values, slope = _loss_terms(estimate, batch.targets, config)
    slope = slope / len(batch)

    touched = [batch.left, batch.right]
    if "cross" in cache:
        for _, safe, mask, _, _, _ in cache["cross"][1]:
            touched.append(safe[mask])
    rows = np.unique(np.concatenate(touched))
    grads = np.zeros((rows.size, vectors.shape[1]))

    def locate(index):
        return np.searchsorted(rows, index)

    if "same" in cache:
        idx, x, y = cache["same"]
        coef = slope[idx] * act_grad(x, y)
        left, right = batch.left[idx], batch.right[idx]
        _scatter_rows(grads, locate(left), coef[:, None] * vectors[right])
        _scatter_rows(grads, locate(right), coef[:, None] * vectors[left])

    if "cross" in cache:
        idx, sides, means = cache["cross"]
        for side, (anchor, safe, mask, counts, x, y) in enumerate(sides):
            other_mean = means[1 - side]
            # d estimate / d y_k = other_mean / count for every valid gamma entry
            coef = (slope[idx] * other_mean / counts)[:, None] * act_grad(x, y) * mask
            anchor_vecs = vectors[anchor]
            gamma_vecs = vectors[safe]
            _scatter_rows(grads, locate(anchor), np.einsum("nk,nkd->nd", coef, gamma_vecs))
            flat_coef = coef[mask]
            _scatter_rows(grads, locate(safe[mask]), flat_coef[:, None] * np.repeat(anchor_vecs, mask.sum(axis=1), axis=0))

    return float(values.mean()), rows, grads


def dense_gradient(vectors, batch: RecordArrays, config: TrainConfig):
    """Full-shape gradient; used for checking the sparse one"""
    loss, rows, grads = loss_and_gradient(vectors, batch, config)
    full = np.zeros_like(vectors)
    full[rows] = grads
    return loss, full


# -- optimisation -----------------------------------------------------------


def train(records, g: BipartiteGraph, config: TrainConfig, table: EmbeddingTable | None = None) -> EmbeddingTable:
    """Mini-batch Adagrad over the record multiset for ``config.epochs`` passes

    ``table.loss_trace`` holds the full-set loss before training followed by
    one entry per epoch.
    """
    config.validate()
    table = table.copy() if table is not None else init_embeddings(g, config.dimension, config.seed)
    if len(records) == 0:
        logger.warning("No training records; returning the initial table")
        return table

    arrays = records if isinstance(records, RecordArrays) else RecordArrays.from_records(records, g.global_index)
    vectors = table.vectors
    state = AdagradState.like(table)
    rng = np.random.default_rng(config.seed)

    def step(index):
        batch = arrays.subset(index)
        _, rows, grads = loss_and_gradient(vectors, batch, config)
        state.step(vectors, rows, grads, config.learning_rate, config.adagrad_eps)

    trace = [batch_loss(vectors, arrays, config)]
    logger.info("Training %s on %d records (r=%d), initial loss %.6f", config.loss.value, len(arrays), config.dimension, trace[0])
    epochs = tqdm(range(1, config.epochs + 1), desc=f"train {config.loss.value}", disable=not config.progress)
    for epoch in epochs:
        order = rng.permutation(len(arrays))
        batches = [order[k:k + config.batch_size] for k in range(0, len(order), config.batch_size)]
        if config.threads > 1:
            # Unsynchronised updates from several workers; not bit-reproducible
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                list(pool.map(step, batches))
        else:
            for index in batches:
                step(index)

        loss = batch_loss(vectors, arrays, config)
        if not np.isfinite(loss) or not np.isfinite(vectors).all():
            raise DivergenceError(epoch, loss)
        trace.append(loss)
        epochs.set_postfix(loss=f"{loss:.4f}")
        logger.info("epoch %d loss %.6f", epoch, loss)

    table.loss_trace = trace
    return table
