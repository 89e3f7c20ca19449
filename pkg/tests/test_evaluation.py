import dataclasses
import itertools
import math

import numpy as np
import pandas as pd
import pytest

from tests.conftest import random_bipartite
from utils.errors import DegenerateClassifierError, EmptyTaskError, ParameterError, SkipUser
from utils.evaluation import (
    REPORT_COLUMNS,
    EvalReport,
    EvalTask,
    RatingGraph,
    UnifiedConfig,
    kernel_scaled,
    link_accuracy,
    link_tasks,
    load_ratings,
    metrics_at_k,
    personalized_eval,
    rank_items,
    run_link_experiment,
    run_rec_experiment,
    run_sensitivity_sweep,
    sensitivity_summary,
    split_ratings,
    train_rbf_svm,
    unified_eval,
    user_centroid,
)
from utils.graph_core import BipartiteGraph, NodeId, Part, bipartite_sbm, block_of, from_named_edges, holdout_split
from utils.trainer import EmbeddingTable, init_embeddings


def brute_force_metrics(ranked, relevant, k):
    """Textbook @k metrics for binary relevance"""
    top = ranked[:k]
    flags = [item in relevant for item in top]
    hits = sum(flags)
    precision, recall = hits / k, hits / len(relevant)
    f1 = 0.0 if hits == 0 else 2 * precision * recall / (precision + recall)
    dcg = sum(1 / math.log2(i + 2) for i, hit in enumerate(flags) if hit)
    idcg = sum(1 / math.log2(i + 2) for i in range(min(len(relevant), k)))
    ap = sum(sum(flags[:i + 1]) / (i + 1) for i, hit in enumerate(flags) if hit) / min(len(relevant), k)
    rr = next((1 / (i + 1) for i, hit in enumerate(flags) if hit), 0.0)
    return f1, dcg / idcg, ap, rr


def random_table(g, dimension, seed):
    return EmbeddingTable(np.random.default_rng(seed).normal(size=(g.num_nodes, dimension)), g.nodes_a)


def two_cliques(na=4, nb=6):
    pairs = [(f"a{c}_{i}", f"b{c}_{j}") for c in range(2) for i in range(na) for j in range(nb)]
    return from_named_edges(pairs)


def block_table(g):
    """Block 0 nodes sit at (1, 1), block 1 nodes at (-1, -1)"""
    signs = np.array([1.0 if block_of(name) == 0 else -1.0 for name in g.global_names])
    return EmbeddingTable(np.column_stack([signs, signs]), g.nodes_a)


class TestRankingMetrics:
    def test_first_item_relevant(self):
        result = metrics_at_k(list(range(10)), {0}, k=10)
        assert (result.mrr, result.map, result.ndcg) == (1.0, 1.0, 1.0)
        assert result.f1 == pytest.approx(2 / 11)

    def test_first_hit_at_rank_three(self):
        assert metrics_at_k([5, 6, 7, 8], {7}, k=4).mrr == pytest.approx(1 / 3)

    def test_second_of_two(self):
        assert metrics_at_k([1, 2], {2}, k=2).ndcg == pytest.approx(1 / math.log2(3))

    def test_nothing_relevant_in_top_k(self):
        result = metrics_at_k([1, 2, 3], {9}, k=2)
        assert result == (0.0, 0.0, 0.0, 0.0)

    def test_empty_relevant_set(self):
        with pytest.raises(SkipUser):
            metrics_at_k([1, 2], set(), k=2)

    def test_bad_k(self):
        with pytest.raises(ParameterError):
            metrics_at_k([1, 2], {1}, k=0)

    def test_graded_gains(self):
        linear = metrics_at_k([1, 2], {1: 1.0, 2: 3.0}, k=2)
        expected = (1 + 3 / math.log2(3)) / (3 + 1 / math.log2(3))
        assert linear.ndcg == pytest.approx(expected)
        exponential = metrics_at_k([1, 2], {1: 1.0, 2: 3.0}, k=2, exponential_gain=True)
        assert exponential.ndcg == pytest.approx((1 + 7 / math.log2(3)) / (7 + 1 / math.log2(3)))
        assert linear.mrr == exponential.mrr == 1.0

    def test_matches_brute_force_exhaustively(self):
        for n in range(1, 7):
            items = list(range(n))
            subsets = [set(c) for size in range(1, n + 1) for c in itertools.combinations(items, size)]
            for ranked in itertools.permutations(items):
                for relevant in subsets:
                    for k in (1, 3, 10):
                        result = metrics_at_k(list(ranked), relevant, k)
                        expected = brute_force_metrics(list(ranked), relevant, k)
                        assert all(abs(x - y) < 1e-12 for x, y in zip(result, expected))
                        assert all(0.0 <= value <= 1.0 + 1e-12 for value in result)
                        ideal = all(item in relevant for item in ranked[:min(len(relevant), k)])
                        assert (abs(result.ndcg - 1.0) < 1e-12) == ideal


class TestRanking:
    def test_dot_product_order(self):
        items = np.array([[2.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert rank_items([1.0, 0.0], items) == [0, 1, 2]

    def test_ties_by_index(self):
        assert rank_items([0.0], np.ones((4, 1))) == [0, 1, 2, 3]

    def test_exclusion_promotes_next(self):
        items = np.array([[2.0], [1.0], [0.5]])
        assert rank_items([1.0], items, exclude={0}) == [1, 2]

    def test_nothing_left(self):
        with pytest.raises(SkipUser):
            rank_items([1.0], np.ones((2, 1)), exclude={0, 1})


class TestCentroid:
    def ratings(self, lines):
        return load_ratings(lines)

    def test_single_item(self):
        ratings = self.ratings(["u1\ti1\t2.0"])
        np.testing.assert_allclose(user_centroid(ratings, np.array([[3.0, 4.0]]), NodeId(0, Part.A)), [3.0, 4.0])

    def test_equal_weights_midpoint(self):
        ratings = self.ratings(["u1\ti1\t1", "u1\ti2\t1"])
        items = np.array([[0.0, 2.0], [4.0, 0.0]])
        np.testing.assert_allclose(user_centroid(ratings, items, NodeId(0, Part.A)), [2.0, 1.0])

    def test_weighted_mean(self):
        ratings = self.ratings(["u1\ti1\t1", "u1\ti2\t3"])
        items = np.array([[0.0], [4.0]])
        np.testing.assert_allclose(user_centroid(ratings, items, NodeId(0, Part.A)), [3.0])

    def test_zero_weight(self):
        ratings = self.ratings(["u1\ti1\t0"])
        with pytest.raises(SkipUser):
            user_centroid(ratings, np.ones((1, 1)), NodeId(0, Part.A))

    def test_user_without_ratings(self):
        g = BipartiteGraph(["u1", "u2"], ["i1"], [(0, 0)], [1.0])
        with pytest.raises(SkipUser):
            user_centroid(RatingGraph(g, g.weights), np.ones((1, 1)), NodeId(1, Part.A))


class TestRatings:
    def test_log_scale(self):
        ratings = load_ratings(["u1\ti1\t9", "u2\ti1\t0"], log_scale=True)
        np.testing.assert_allclose(ratings.weights, [math.log(10), 0.0])
        np.testing.assert_allclose(ratings.graph.weights, ratings.weights)

    def test_negative_counts_cannot_be_logged(self):
        with pytest.raises(ParameterError):
            load_ratings(["u1\ti1\t-2"], log_scale=True)

    def test_unweighted_lines_default_to_one(self):
        np.testing.assert_array_equal(load_ratings(["u1\ti1"]).weights, [1.0])

    def test_split_sizes(self):
        lines = [f"u{u}\ti{i}\t{u + i}" for u in range(5) for i in range(4)]
        train, test = split_ratings(load_ratings(lines), 0.4, seed=3)
        assert len(test) == 8 and train.graph.num_edges == 12
        g = train.graph
        kept = {(g.names_a[a], g.names_b[b]) for a, b in g.edges}
        assert not kept & {(u, i) for u, i, _ in test}

    def test_split_rejects_everything_held_out(self):
        with pytest.raises(EmptyTaskError):
            split_ratings(load_ratings(["u1\ti1"]), 1.0, seed=0)

    def test_split_ratio_range(self):
        with pytest.raises(ParameterError):
            split_ratings(load_ratings(["u1\ti1"]), 1.5, seed=0)


class TestClassifiers:
    def test_separable_pair(self):
        decide = train_rbf_svm([[0.0], [10.0]], [1, -1])
        np.testing.assert_array_equal(decide([[0.0], [10.0]]), [1, -1])

    def test_xor(self):
        points = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]
        labels = [1, 1, -1, -1]
        decide = train_rbf_svm(points, labels, C=1.0, gamma=0.1)
        np.testing.assert_array_equal(decide(points), labels)

    def test_conflicting_duplicates(self):
        decide = train_rbf_svm([[0.0], [0.0], [5.0]], [1, -1, 1])
        predictions = decide([[0.0], [0.0]])
        assert (predictions == [1, -1]).sum() <= 1

    def test_single_class(self):
        with pytest.raises(DegenerateClassifierError):
            train_rbf_svm([[0.0], [1.0]], [1, 1])

    def test_kkt_conditions(self):
        rng = np.random.default_rng(11)
        points = np.vstack([rng.normal(1.0, 1.0, size=(20, 2)), rng.normal(-1.0, 1.0, size=(20, 2))])
        labels = np.concatenate([np.ones(20), -np.ones(20)])
        C = 1.0
        svc = train_rbf_svm(points, labels, C=C, gamma=0.1).svc

        alpha = np.zeros(labels.size)
        alpha[svc.support_] = np.abs(svc.dual_coef_[0])
        assert (alpha <= C + 1e-9).all()
        assert svc.dual_coef_[0].sum() == pytest.approx(0.0, abs=1e-8)

        margins = labels * svc.decision_function(points)
        free = (alpha > 1e-8) & (alpha < C - 1e-8)
        bound = alpha >= C - 1e-8
        idle = alpha <= 1e-8
        assert (margins[idle] >= 1 - 1e-2).all()
        np.testing.assert_allclose(margins[free], 1.0, atol=1e-2)
        assert (margins[bound] <= 1 + 1e-2).all()

    def test_kernel_scaled_table(self):
        vectors = np.random.default_rng(0).normal(3.0, 5.0, size=(50, 4))
        scaled = kernel_scaled(vectors, gamma=0.1)
        assert 0.1 * scaled.shape[1] * scaled.var() == pytest.approx(1.0)
        np.testing.assert_allclose(scaled * np.sqrt(0.1 * 4 * vectors.var()), vectors)

    def test_kernel_scaled_leaves_constant_table(self):
        vectors = np.full((5, 3), 2.0)
        np.testing.assert_array_equal(kernel_scaled(vectors), vectors)

    def test_link_accuracy(self):
        assert link_accuracy([0.9, 0.2, 0.6, 0.4], [1, 0, 0, 1]) == 0.5
        assert link_accuracy(np.full(6, 0.5), [1, 1, 1, 0, 0, 0]) == 0.5

    def test_link_accuracy_needs_pairs(self):
        with pytest.raises(EmptyTaskError):
            link_accuracy([], [])


class TestPersonalized:
    @pytest.mark.parametrize("part", [Part.A, Part.B])
    def test_separable_embedding(self, part):
        g = two_cliques()
        split = holdout_split(g, 0.5, seed=1)
        assert personalized_eval(split, block_table(g), part) == 1.0

    def test_random_embedding_is_chance(self):
        rng = np.random.default_rng(4)
        g = random_bipartite(rng, 30, 30, 0.2)
        split = holdout_split(g, 0.5, seed=2)
        accuracy = personalized_eval(split, random_table(g, 8, seed=5), Part.A)
        assert abs(accuracy - 0.5) <= 0.1

    @pytest.mark.parametrize("part", [Part.A, Part.B])
    def test_large_norm_block_embedding(self, part):
        g = bipartite_sbm(20, 20, 0.8, 0.02, seed=0)
        split = holdout_split(g, 0.5, seed=1)
        rng = np.random.default_rng(2)
        direction = rng.normal(size=100)
        direction /= np.linalg.norm(direction)
        signs = np.array([1.0 if block_of(name) == 0 else -1.0 for name in g.global_names])
        vectors = 7.0 * signs[:, None] * direction + rng.normal(0.0, 0.3, size=(g.num_nodes, 100))
        accuracy = personalized_eval(split, EmbeddingTable(vectors, g.nodes_a), part)
        assert accuracy > 0.7

    def test_threads_do_not_change_result(self):
        g = two_cliques()
        split = holdout_split(g, 0.5, seed=3)
        table = random_table(g, 4, seed=0)
        assert personalized_eval(split, table, Part.A) == personalized_eval(split, table, Part.A, threads=3)

    def test_tree_has_no_task(self, tree):
        split = holdout_split(tree, 0.5, seed=0)
        with pytest.raises(EmptyTaskError):
            personalized_eval(split, random_table(tree, 2, 0), Part.A)


class TestUnified:
    def test_engineered_embedding(self):
        # K_{6,6} plus six pendant items hanging off a0; every non-edge pairs a1..a5 with a pendant
        pairs = [(f"a{i}", f"b{j}") for i in range(6) for j in range(6)]
        pairs += [("a0", f"p{j}") for j in range(6)]
        g = from_named_edges(pairs)
        vectors = np.zeros((g.num_nodes, 2))
        vectors[:g.nodes_a, 0] = 1.0
        vectors[g.node_of("a0").index, 0] = -1.0
        for j, name in enumerate(g.names_b):
            vectors[g.nodes_a + j, 1] = -1.0 if name.startswith("p") else 1.0
        table = EmbeddingTable(vectors, g.nodes_a)

        split = holdout_split(g, 0.5, seed=0)
        assert split.removed_edges.shape[0] > 0
        config = UnifiedConfig(epochs=500, learning_rate=0.1, hidden=8, seed=0)
        assert unified_eval(split, table, config) == 1.0

    def test_randomized_labels_are_chance(self):
        g = bipartite_sbm(40, 40, 0.3, 0.02, seed=0)
        split = holdout_split(g, 0.5, seed=0)
        pairs = np.vstack([split.removed_edges, split.negative_edges])
        pairs = pairs[np.random.default_rng(3).permutation(pairs.shape[0])]
        half = pairs.shape[0] // 2
        shuffled = dataclasses.replace(split, removed_edges=pairs[:half], negative_edges=pairs[half:])
        assert len(set(shuffled.removed_edges[:, 0].tolist())) >= 20

        accuracy = unified_eval(shuffled, random_table(g, 8, seed=1), UnifiedConfig(epochs=20, seed=0))
        assert 0.4 <= accuracy <= 0.6

    def test_tree_has_no_task(self, tree):
        split = holdout_split(tree, 0.5, seed=0)
        with pytest.raises(EmptyTaskError):
            unified_eval(split, random_table(tree, 2, 0))

    def test_link_tasks_mark_invalid_cells(self, tree):
        split = holdout_split(tree, 0.5, seed=0)
        results = list(link_tasks(split, random_table(tree, 2, 0)))
        assert [task for task, _, _ in results] == [EvalTask.A_PERS, EvalTask.B_PERS, EvalTask.UNIFIED]
        assert all(math.isnan(accuracy) and error for _, accuracy, error in results)


def init_embedder(g, seed):
    return init_embeddings(g, 4, seed)


class TestLinkExperiment:
    def test_single_cell(self):
        g = bipartite_sbm(12, 12, 0.5, 0.05, seed=0)
        report = run_link_experiment(g, {"fobe": init_embedder}, holdouts=(0.5,), seeds=(0,), unified=UnifiedConfig(epochs=5))
        assert list(report.rows.columns) == REPORT_COLUMNS
        assert len(report.rows) == 3
        assert set(report.rows["task"]) == {"a_personalized", "b_personalized", "unified"}
        assert report.rows["value"].between(0, 1).all()
        assert report.seeds == [0]

    def test_mean_over_seeds(self):
        g = bipartite_sbm(12, 12, 0.5, 0.05, seed=0)
        report = run_link_experiment(g, {"fobe": init_embedder}, holdouts=(0.5,), seeds=(0, 1), unified=UnifiedConfig(epochs=5))
        summary = report.summary()
        assert len(summary) == 3
        unified = report.rows[report.rows["task"] == "unified"]["value"].mean()
        assert summary.loc[summary["task"] == "unified", "value"].item() == pytest.approx(unified)

    def test_tree_cells_are_invalid(self, tree):
        report = run_link_experiment(tree, {"fobe": init_embedder}, holdouts=(0.5,), seeds=(0,))
        assert report.all_invalid()
        assert len(report.invalid) == 3
        assert report.summary().empty


class TestRecommendation:
    def test_complete_ratings_rank_test_items_first(self):
        lines = [f"u{u}\ti{i}\t{1 + (u * i) % 5}" for u in range(5) for i in range(6)]
        report = run_rec_experiment(load_ratings(lines), {"fobe": init_embedder}, holdout=0.4, k=10, seed=1)
        values = report.rows.set_index("metric")["value"]
        assert values["mrr"] == 1.0 and values["map"] == 1.0 and values["ndcg"] == pytest.approx(1.0)
        assert set(report.rows["task"]) == {"recommend"}
        assert set(report.rows["h_or_k"]) == {10}

    def test_zero_holdout(self):
        with pytest.raises(EmptyTaskError):
            run_rec_experiment(load_ratings(["u1\ti1\t1", "u2\ti1\t2"]), {"fobe": init_embedder}, holdout=0.0)

    def test_planted_preferences_match_oracle(self):
        rng = np.random.default_rng(6)
        lines = [f"u{u}\ti{i}\t{1 + rng.integers(5)}" for u in range(5) for i in range(5) if (u + i) % 3 or u == i]
        ratings = load_ratings(lines)
        seed, k = 2, 3
        report = run_rec_experiment(ratings, {"fobe": init_embedder}, holdout=0.4, k=k, seed=seed)

        train, test = split_ratings(ratings, 0.4, seed)
        g = train.graph
        table = init_embedder(g, seed)
        items = table.vectors[g.nodes_a:]
        expected = []
        for user in sorted({u for u, _, _ in test}):
            relevant = {g.names_b.index(i) for u, i, _ in test if u == user and i in g.names_b}
            if user not in g.names_a or not relevant:
                continue
            a = g.names_a.index(user)
            rated = {int(b) for aa, b in g.edges if aa == a}
            weights = {int(b): w for (aa, b), w in zip(g.edges, train.weights) if aa == a}
            centroid = sum(w * items[b] for b, w in weights.items()) / sum(weights.values())
            candidates = [b for b in range(g.nodes_b) if b not in rated]
            if not candidates:
                continue
            ranked = sorted(candidates, key=lambda b: (-float(items[b] @ centroid), b))
            expected.append(brute_force_metrics(ranked, relevant, k))

        assert expected
        means = np.mean(expected, axis=0)
        values = report.rows.set_index("metric")["value"]
        np.testing.assert_allclose([values["f1"], values["ndcg"], values["map"], values["mrr"]], means, atol=1e-12)


class TestSensitivity:
    def test_sweep_rows(self):
        g = bipartite_sbm(10, 10, 0.5, 0.05, seed=1)
        report = run_sensitivity_sweep(
            g, lambda rate: init_embedder, rates=(2, 4), trials=2, holdout=0.5,
            unified=UnifiedConfig(epochs=3), base_seed=7,
        )
        assert len(report.rows) == 2 * 2 * 3
        assert set(report.rows["h_or_k"]) == {2, 4}
        assert set(report.rows["seed"]) == {7, 8}
        assert set(report.rows["method"]) == {"sweep"}

    def test_summary_statistics(self):
        rows = pd.DataFrame(
            [
                ("sweep", "unified", 2, 0, "accuracy", 0.6),
                ("sweep", "unified", 2, 1, "accuracy", 0.8),
                ("sweep", "unified", 4, 0, "accuracy", 0.7),
                ("sweep", "unified", 4, 1, "accuracy", float("nan")),
            ],
            columns=REPORT_COLUMNS,
        )
        summary = sensitivity_summary(EvalReport(rows))
        assert list(summary.columns) == ["task", "samples_per_node", "mean", "variance", "min", "max"]
        two = summary[summary["samples_per_node"] == 2].iloc[0]
        assert two["mean"] == pytest.approx(0.7)
        assert two["variance"] == pytest.approx(0.01)
        assert (two["min"], two["max"]) == (0.6, 0.8)
        four = summary[summary["samples_per_node"] == 4].iloc[0]
        assert four["mean"] == pytest.approx(0.7)
        assert four["variance"] == 0.0
        assert four["min"] == four["max"] == 0.7


class TestReport:
    def test_empty_report_is_invalid(self):
        assert EvalReport().all_invalid()

    def test_tasks(self):
        rows = pd.DataFrame([("m", "unified", 0.5, 0, "accuracy", 0.9)], columns=REPORT_COLUMNS)
        assert EvalReport(rows).tasks == ["unified"]
