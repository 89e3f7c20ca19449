"""Link-prediction and recommendation evaluation harnesses.

Three link tasks run on every holdout split: per-node RBF-SVMs over the
opposite part's embeddings (A- and B-personalized) and one small MLP over
concatenated pair embeddings (unified). Recommendation ranks items by dot
product with a user's rating-weighted item centroid.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np
import pandas as pd
import torch
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC
from torch import nn
from tqdm import tqdm

from utils.errors import (
    BipartiteEmbeddingError,
    DegenerateClassifierError,
    EmptyTaskError,
    ParameterError,
    SkipUser,
)
from utils.graph_core import BipartiteGraph, HoldoutSplit, NodeId, Part, from_named_edges, holdout_split, load_edge_list
from utils.trainer import EmbeddingTable

logger = logging.getLogger(__name__)

SVM_C = 1.0
SVM_GAMMA = 0.1
SVM_TOLERANCE = 1e-3
SVM_MAX_ITER = 10_000
SVM_CLASS_WEIGHT = "balanced"
PERSONALIZED_NEGATIVES = 5
DEFAULT_HOLDOUTS = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_REC_HOLDOUT = 0.4
DEFAULT_TOP_K = 10
SWEEP_RATES = tuple(2 ** i for i in range(1, 11))
SWEEP_TRIALS = 10
SWEEP_HOLDOUT = 0.5
UNIFIED_LEARNING_RATE = 0.01

REPORT_COLUMNS = ["method", "task", "h_or_k", "seed", "metric", "value"]

Embedder = Callable[[BipartiteGraph, int], EmbeddingTable]


class EvalTask(str, Enum):
    A_PERS = "a_personalized"
    B_PERS = "b_personalized"
    UNIFIED = "unified"
    RECOMMEND = "recommend"


@dataclass
class RatingGraph:
    """A bipartite user/item graph whose edge weights are ratings"""

    graph: BipartiteGraph
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (self.graph.num_edges,):
            raise ParameterError("ratings must align with the graph's edges")
        if not np.isfinite(self.weights).all():
            raise ParameterError("ratings must be finite")


def load_ratings(source: Iterable[str], log_scale: bool = False) -> RatingGraph:
    """Read ``user<TAB>item<TAB>rating`` lines; ``log_scale`` applies log(1 + w)"""
    graph = load_edge_list(source)
    weights = graph.weights if graph.weights is not None else np.ones(graph.num_edges)
    if log_scale:
        if (weights < 0).any():
            raise ParameterError("log scaling needs non-negative counts")
        weights = np.log1p(weights)
    return RatingGraph(BipartiteGraph(graph.names_a, graph.names_b, graph.edges, weights), weights)


@dataclass
class EvalReport:
    rows: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=REPORT_COLUMNS))
    seeds: list[int] = field(default_factory=list)
    runtime: float = 0.0
    invalid: list[dict] = field(default_factory=list)

    @classmethod
    def from_records(cls, records, seeds, runtime, invalid=()):
        rows = pd.DataFrame(records, columns=REPORT_COLUMNS)
        return cls(rows, list(seeds), runtime, list(invalid))

    @property
    def tasks(self) -> list[str]:
        return sorted(self.rows["task"].unique().tolist())

    def summary(self) -> pd.DataFrame:
        """Mean value per (method, task, h_or_k, metric) over seeds; invalid cells dropped"""
        valid = self.rows.dropna(subset=["value"])
        return (
            valid.groupby(["method", "task", "h_or_k", "metric"], as_index=False)["value"]
            .mean()
            .sort_values(["method", "task", "h_or_k", "metric"], ignore_index=True)
        )

    def all_invalid(self) -> bool:
        return self.rows.empty or self.rows["value"].isna().all()


# -- classifiers ------------------------------------------------------------


class RbfDecision:
    """Sign-valued decision function of a fitted RBF support vector machine"""

    def __init__(self, svc: SVC):
        self.svc = svc

    def __call__(self, points) -> np.ndarray:
        return np.where(self.svc.decision_function(np.atleast_2d(points)) >= 0, 1, -1)

    def margin(self, points) -> np.ndarray:
        return self.svc.decision_function(np.atleast_2d(points))


def train_rbf_svm(
    points,
    labels,
    C: float = SVM_C,
    gamma: float = SVM_GAMMA,
    class_weight: str | dict | None = SVM_CLASS_WEIGHT,
) -> RbfDecision:
    """Soft-margin SVM with K(x, y) = exp(-gamma ||x - y||^2), fitted by SMO

    ``class_weight="balanced"`` scales C per class by inverse frequency.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise DegenerateClassifierError("SVM training data holds a single class")
    svc = SVC(C=C, kernel="rbf", gamma=gamma, class_weight=class_weight, tol=SVM_TOLERANCE, max_iter=SVM_MAX_ITER)
    svc.fit(points, labels)
    return RbfDecision(svc)


def kernel_scaled(vectors: np.ndarray, gamma: float = SVM_GAMMA) -> np.ndarray:
    """Rescale a whole table so that gamma * dimension * variance == 1

    Matches sklearn's ``gamma="scale"`` heuristic while keeping gamma fixed.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    spread = vectors.shape[1] * vectors.var()
    if not spread > 0:
        return vectors
    return vectors / np.sqrt(gamma * spread)


def link_accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of pairs where ``score > threshold`` agrees with the 0/1 label"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise EmptyTaskError("no scored pairs")
    return float(((scores > threshold) == (labels > 0.5)).mean())


# -- personalized link prediction -------------------------------------------


def _removed_neighbors(split: HoldoutSplit) -> dict[int, set]:
    """Held-out neighbors per global index, in both directions"""
    g = split.training_graph
    held = {}
    for a, b in split.removed_edges:
        gb = int(b) + g.nodes_a
        held.setdefault(int(a), set()).add(gb)
        held.setdefault(gb, set()).add(int(a))
    return held


def _personalized_node(gid, split, vectors, held, seed, negatives_per_positive, C, gamma):
    """Accuracy of one node's SVM on its held-out edges, or None when it does not qualify"""
    g = split.training_graph
    train_nbrs = g.neighbors(gid)
    test_nbrs = np.array(sorted(held.get(gid, ())), dtype=np.int64)
    if train_nbrs.size == 0 or test_nbrs.size == 0:
        return None

    opposite = g.part_range(g.part_of(gid).other)
    known = np.concatenate([train_nbrs, test_nbrs])
    candidates = np.setdiff1d(np.arange(opposite.start, opposite.stop), known)
    if candidates.size == 0:
        return None

    rng = np.random.default_rng([seed, gid])
    n_train_neg = min(negatives_per_positive * train_nbrs.size, candidates.size)
    train_neg = rng.choice(candidates, size=n_train_neg, replace=False)
    remaining = np.setdiff1d(candidates, train_neg)
    if remaining.size >= test_nbrs.size:
        test_neg = rng.choice(remaining, size=test_nbrs.size, replace=False)
    else:
        test_neg = rng.choice(candidates, size=test_nbrs.size, replace=True)

    points = vectors[np.concatenate([train_nbrs, train_neg])]
    labels = np.concatenate([np.ones(train_nbrs.size), -np.ones(train_neg.size)])
    decide = train_rbf_svm(points, labels, C, gamma)

    test_points = vectors[np.concatenate([test_nbrs, test_neg])]
    test_labels = np.concatenate([np.ones(test_nbrs.size), -np.ones(test_neg.size)])
    return float((decide(test_points) == test_labels).mean())


def personalized_eval(
    split: HoldoutSplit,
    table: EmbeddingTable,
    part: Part,
    seed: int | None = None,
    negatives_per_positive: int = PERSONALIZED_NEGATIVES,
    threads: int = 1,
    C: float = SVM_C,
    gamma: float = SVM_GAMMA,
) -> float:
    """Mean per-node SVM accuracy for nodes of ``part`` with training and held-out edges

    The table is passed through kernel_scaled first.
    """
    seed = split.seed if seed is None else seed
    g = split.training_graph
    held = _removed_neighbors(split)
    nodes = [gid for gid in g.part_range(part) if gid in held]
    vectors = kernel_scaled(table.vectors, gamma)

    def run(gid):
        return _personalized_node(gid, split, vectors, held, seed, negatives_per_positive, C, gamma)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(run, nodes))
    else:
        scores = [run(gid) for gid in nodes]
    scores = [s for s in scores if s is not None]
    if not scores:
        raise EmptyTaskError(f"no part-{part.value} node has both training and held-out edges")
    logger.info("Personalized %s accuracy %.4f over %d nodes", part.value, np.mean(scores), len(scores))
    return float(np.mean(scores))


# -- unified link prediction -------------------------------------------------


@dataclass
class UnifiedConfig:
    epochs: int = 50
    learning_rate: float = UNIFIED_LEARNING_RATE
    batch_size: int = 256
    hidden: int | None = None
    seed: int = 0


class LinkMLP(nn.Module):
    """Concatenated pair embedding -> ReLU hidden layer -> sigmoid edge score"""

    def __init__(self, input_dim: int, hidden: int):
        super().__init__()
        self.layers = nn.Sequential(nn.Linear(input_dim, hidden), nn.ReLU(), nn.Linear(hidden, 1), nn.Sigmoid())

    def forward(self, x):
        return self.layers(x).squeeze(-1)


def _training_negatives(split: HoldoutSplit, count: int, seed: int) -> np.ndarray:
    """Non-edges of the training graph that are neither held-out positives nor test negatives"""
    g = split.training_graph
    nb = max(g.nodes_b, 1)
    excluded = set(g.edge_codes().tolist())
    excluded.update((int(a) * nb + int(b)) for a, b in split.removed_edges)
    excluded.update((int(a) * nb + int(b)) for a, b in split.negative_edges)
    available = g.nodes_a * g.nodes_b - len(excluded)
    count = min(count, available)
    rng = np.random.default_rng([seed, 7])
    chosen = []
    taken = set()
    while len(chosen) < count:
        code = int(rng.integers(g.nodes_a * g.nodes_b))
        if code in excluded or code in taken:
            continue
        taken.add(code)
        chosen.append(code)
    chosen = np.asarray(chosen, dtype=np.int64)
    return np.column_stack([chosen // nb, chosen % nb]) if chosen.size else np.empty((0, 2), dtype=np.int64)


def _pair_features(table: EmbeddingTable, pairs: np.ndarray, nodes_a: int) -> np.ndarray:
    return np.hstack([table.vectors[pairs[:, 0]], table.vectors[pairs[:, 1] + nodes_a]])


def unified_eval(split: HoldoutSplit, table: EmbeddingTable, config: UnifiedConfig | None = None) -> float:
    """Accuracy of one MLP trained on E' plus negatives, tested on removed vs negative edges"""
    config = config or UnifiedConfig(seed=split.seed)
    g = split.training_graph
    if split.removed_edges.shape[0] == 0 or split.negative_edges.shape[0] == 0:
        raise EmptyTaskError("the split holds no removed edges to test on")

    negatives = _training_negatives(split, g.num_edges, config.seed)
    if negatives.shape[0] == 0:
        raise EmptyTaskError("no training negatives available")
    train_pairs = np.vstack([g.edges, negatives])
    # Standardized with statistics of the training pairs only
    features = _pair_features(table, train_pairs, g.nodes_a)
    scaler = StandardScaler().fit(features)
    train_x = torch.as_tensor(scaler.transform(features), dtype=torch.float32)
    train_y = torch.cat([torch.ones(g.num_edges), torch.zeros(negatives.shape[0])])

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    model = LinkMLP(train_x.shape[1], config.hidden or table.dimension)
    optimizer = torch.optim.Adagrad(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.MSELoss()
    model.train()
    for _ in range(config.epochs):
        order = torch.randperm(train_x.shape[0], generator=generator)
        for start in range(0, train_x.shape[0], config.batch_size):
            index = order[start:start + config.batch_size]
            loss = loss_fn(model(train_x[index]), train_y[index])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    test_pairs = np.vstack([split.removed_edges, split.negative_edges])
    labels = np.concatenate([np.ones(split.removed_edges.shape[0]), np.zeros(split.negative_edges.shape[0])])
    model.eval()
    with torch.no_grad():
        test_x = torch.as_tensor(scaler.transform(_pair_features(table, test_pairs, g.nodes_a)), dtype=torch.float32)
        scores = model(test_x).numpy()
    accuracy = link_accuracy(scores, labels)
    logger.info("Unified accuracy %.4f on %d test pairs", accuracy, labels.size)
    return accuracy


# -- recommendation ----------------------------------------------------------


class RankingMetrics(NamedTuple):
    f1: float
    ndcg: float
    map: float
    mrr: float


def user_centroid(ratings: RatingGraph, item_vectors: np.ndarray, user: NodeId) -> np.ndarray:
    """Rating-weighted mean of the embeddings of the items the user rated"""
    g = ratings.graph
    mask = g.edges[:, 0] == user.index
    if not mask.any():
        raise SkipUser(f"user {user!r} has no training ratings")
    weights = ratings.weights[mask]
    total = weights.sum()
    if total == 0:
        raise SkipUser(f"user {user!r} has zero total rating weight")
    items = g.edges[mask, 1]
    return weights @ np.asarray(item_vectors)[items] / total


def rank_items(centroid, item_vectors: np.ndarray, exclude=()) -> list[int]:
    """Item indices by descending dot product with the centroid, ties by ascending index"""
    scores = np.asarray(item_vectors) @ np.asarray(centroid)
    ids = np.arange(scores.shape[0])
    keep = ~np.isin(ids, np.fromiter(exclude, dtype=np.int64, count=len(exclude)))
    if not keep.any():
        raise SkipUser("no candidate items left to rank")
    ids, scores = ids[keep], scores[keep]
    order = np.lexsort((ids, -scores))
    return ids[order].tolist()


def metrics_at_k(ranked, relevant, k: int = DEFAULT_TOP_K, exponential_gain: bool = False) -> RankingMetrics:
    """F1, NDCG, MAP and MRR of the first k ranked items

    ``relevant`` is a set (binary relevance) or a mapping item -> grade; a
    grade only changes NDCG gains, every positive grade counts as a hit.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    grades = dict(relevant) if isinstance(relevant, Mapping) else {item: 1.0 for item in relevant}
    grades = {item: g for item, g in grades.items() if g > 0}
    if not grades:
        raise SkipUser("empty relevant set")

    def gain(grade):
        return 2.0 ** grade - 1.0 if exponential_gain else float(grade)

    top = list(ranked)[:k]
    hits = 0
    precision_sum = 0.0
    dcg = 0.0
    reciprocal = 0.0
    for rank, item in enumerate(top, start=1):
        grade = grades.get(item, 0.0)
        if grade > 0:
            hits += 1
            precision_sum += hits / rank
            dcg += gain(grade) / math.log2(rank + 1)
            if reciprocal == 0.0:
                reciprocal = 1.0 / rank

    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = sum(gain(grade) / math.log2(rank + 1) for rank, grade in enumerate(ideal, start=1))

    precision = hits / k
    recall = hits / len(grades)
    f1 = 2 * precision * recall / (precision + recall) if hits else 0.0
    return RankingMetrics(
        f1=f1,
        ndcg=dcg / idcg,
        map=precision_sum / min(len(grades), k),
        mrr=reciprocal,
    )


def split_ratings(ratings: RatingGraph, holdout: float, seed: int):
    """Seeded shuffle of rating edges into (training RatingGraph, test name triples)"""
    if not 0.0 <= holdout <= 1.0:
        raise ParameterError(f"holdout must be in [0, 1], got {holdout}")
    g = ratings.graph
    order = np.random.default_rng(seed).permutation(g.num_edges)
    n_test = int(round(holdout * g.num_edges))
    test_idx, train_idx = order[:n_test], np.sort(order[n_test:])
    if train_idx.size == 0:
        raise EmptyTaskError("holdout leaves no training ratings")

    pairs = [(g.names_a[a], g.names_b[b]) for a, b in g.edges[train_idx]]
    train_graph = from_named_edges(pairs, ratings.weights[train_idx])
    train = RatingGraph(train_graph, train_graph.weights)
    test = [(g.names_a[a], g.names_b[b], float(ratings.weights[e])) for e, (a, b) in zip(test_idx, g.edges[test_idx])]
    return train, test


def _evaluate_rankings(train: RatingGraph, test, table: EmbeddingTable, k, exponential_gain, graded):
    g = train.graph
    item_vectors = table.vectors[g.nodes_a:]
    per_user = {}
    for user_name, item_name, rating in test:
        # Users or items seen only in the test split have no embedding
        try:
            user = g.node_of(user_name)
            item = g.node_of(item_name)
        except BipartiteEmbeddingError:
            continue
        if user.part is not Part.A or item.part is not Part.B:
            continue
        per_user.setdefault(user.index, {})[item.index] = rating if graded else 1.0

    results = []
    for user_index in sorted(per_user):
        user = NodeId(user_index, Part.A)
        try:
            centroid = user_centroid(train, item_vectors, user)
            rated = set((g.neighbors(user_index) - g.nodes_a).tolist())
            ranked = rank_items(centroid, item_vectors, rated)
            results.append(metrics_at_k(ranked, per_user[user_index], k, exponential_gain))
        except SkipUser as skip:
            logger.debug("skipping user: %s", skip)
    return results


def run_rec_experiment(
    ratings: RatingGraph,
    methods: Mapping[str, Embedder],
    holdout: float = DEFAULT_REC_HOLDOUT,
    k: int = DEFAULT_TOP_K,
    seed: int = 0,
    exponential_gain: bool = False,
    graded: bool = False,
) -> EvalReport:
    """Centroid-ranking recommendation metrics at k for each embedding method"""
    started = time.perf_counter()
    train, test = split_ratings(ratings, holdout, seed)
    if not test:
        raise EmptyTaskError("holdout produced no test ratings")

    rows = []
    for method, embed in methods.items():
        table = embed(train.graph, seed)
        results = _evaluate_rankings(train, test, table, k, exponential_gain, graded)
        if not results:
            raise EmptyTaskError("no user has both training and test ratings")
        means = np.mean(np.array(results), axis=0)
        for metric, value in zip(RankingMetrics._fields, means):
            rows.append((method, EvalTask.RECOMMEND.value, k, seed, metric, float(value)))
        logger.info("%s over %d users: %s", method, len(results), dict(zip(RankingMetrics._fields, np.round(means, 4))))
    return EvalReport.from_records(rows, [seed], time.perf_counter() - started)


# -- link experiment drivers -------------------------------------------------


def link_tasks(split: HoldoutSplit, table: EmbeddingTable, threads: int = 1, unified: UnifiedConfig | None = None):
    """Run the three link tasks, yielding (task, accuracy, error); a task with no qualifying data scores NaN"""
    tasks = (
        (EvalTask.A_PERS, lambda: personalized_eval(split, table, Part.A, threads=threads)),
        (EvalTask.B_PERS, lambda: personalized_eval(split, table, Part.B, threads=threads)),
        (EvalTask.UNIFIED, lambda: unified_eval(split, table, unified)),
    )
    for task, run in tasks:
        try:
            yield task, run(), None
        except EmptyTaskError as error:
            yield task, float("nan"), str(error)


def run_link_experiment(
    g: BipartiteGraph,
    methods: Mapping[str, Embedder],
    holdouts=DEFAULT_HOLDOUTS,
    seeds=(0,),
    threads: int = 1,
    unified: UnifiedConfig | None = None,
    progress: bool = False,
) -> EvalReport:
    """split -> embed -> three link tasks for every (method, h, seed)"""
    started = time.perf_counter()
    rows, invalid = [], []
    cells = [(h, seed) for h in holdouts for seed in seeds]
    for h, seed in tqdm(cells, desc="link experiment", disable=not progress):
        split = holdout_split(g, h, seed)
        for method, embed in methods.items():
            table = embed(split.training_graph, seed)
            config = replace(unified, seed=seed) if unified else UnifiedConfig(seed=seed)
            for task, accuracy, error in link_tasks(split, table, threads, config):
                rows.append((method, task.value, h, seed, "accuracy", accuracy))
                if error is not None:
                    logger.warning("%s %s h=%.2f seed=%d invalid: %s", method, task.value, h, seed, error)
                    invalid.append({"method": method, "task": task.value, "h_or_k": h, "seed": seed, "error": error})
    return EvalReport.from_records(rows, seeds, time.perf_counter() - started, invalid)


def run_sensitivity_sweep(
    g: BipartiteGraph,
    embed_for_rate: Callable[[int], Embedder],
    rates=SWEEP_RATES,
    trials: int = SWEEP_TRIALS,
    holdout: float = SWEEP_HOLDOUT,
    threads: int = 1,
    unified: UnifiedConfig | None = None,
    base_seed: int = 0,
    progress: bool = False,
) -> EvalReport:
    """Link accuracy across sampling rates; the h_or_k column holds s_r

    Trial t uses seed ``base_seed + t`` for its split and its embedding.
    """
    started = time.perf_counter()
    rows, invalid = [], []
    seeds = [base_seed + t for t in range(trials)]
    for rate in tqdm(rates, desc="sensitivity sweep", disable=not progress):
        embed = embed_for_rate(rate)
        for seed in seeds:
            split = holdout_split(g, holdout, seed)
            table = embed(split.training_graph, seed)
            config = replace(unified, seed=seed) if unified else UnifiedConfig(seed=seed)
            for task, accuracy, error in link_tasks(split, table, threads, config):
                rows.append(("sweep", task.value, rate, seed, "accuracy", accuracy))
                if error is not None:
                    invalid.append({"method": "sweep", "task": task.value, "h_or_k": rate, "seed": seed, "error": error})
    return EvalReport.from_records(rows, seeds, time.perf_counter() - started, invalid)


def sensitivity_summary(report: EvalReport) -> pd.DataFrame:
    """Mean, variance, min and max of accuracy per (task, s_r) across trials"""
    valid = report.rows.dropna(subset=["value"])
    return (
        valid.groupby(["task", "h_or_k"])["value"]
        .agg(mean="mean", variance=lambda v: float(np.var(v)), min="min", max="max")
        .reset_index()
        .rename(columns={"h_or_k": "samples_per_node"})
    )
