import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DegenerateCorpus, DimensionMismatch, NoRelevantItem
from src.retrieval_eval import (
    EvalCorpus,
    EvalReport,
    average_precision,
    evaluate_corpus,
    mean_average_precision,
    rank_at_k,
    similarity_matrix,
)


def _unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _random_instance(seed):
    """Similarities on a coarse grid so ties are frequent."""
    rng = np.random.default_rng(seed)
    g = int(rng.integers(2, 21))
    q = int(rng.integers(1, 8))
    n_ids = int(rng.integers(1, g + 1))
    gallery_ids = rng.integers(n_ids, size=g)
    query_ids = rng.choice(gallery_ids, size=q)
    sim = rng.integers(-4, 5, size=(q, g)) / 4.0
    return sim, query_ids, gallery_ids


def _brute_ranking(row):
    return sorted(range(len(row)), key=lambda j: (-row[j], j))


def oracle_rank_at_k(sim, query_ids, gallery_ids, k):
    hits = 0
    for qi, row in enumerate(sim):
        top = _brute_ranking(row)[:k]
        hits += any(gallery_ids[j] == query_ids[qi] for j in top)
    return hits / len(sim)


def oracle_map(sim, query_ids, gallery_ids):
    aps = []
    for qi, row in enumerate(sim):
        found, precisions = 0, []
        for rank, j in enumerate(_brute_ranking(row), start=1):
            if gallery_ids[j] == query_ids[qi]:
                found += 1
                precisions.append(found / rank)
        aps.append(sum(precisions) / len(precisions))
    return sum(aps) / len(aps)


class TestSimilarityMatrix:
    def test_self_similarity(self):
        x = _unit_rows(np.random.default_rng(0), 3, 5)
        assert_allclose(np.diag(similarity_matrix(x, x)), 1.0, rtol=1e-12)

    def test_orthogonal(self):
        assert similarity_matrix(np.eye(3)[:1], np.eye(3)[1:2])[0, 0] == 0.0

    def test_matches_loop(self):
        rng = np.random.default_rng(1)
        q, g = _unit_rows(rng, 3, 6), _unit_rows(rng, 5, 6)
        sim = similarity_matrix(q, g)
        for i in range(3):
            for j in range(5):
                assert abs(sim[i, j] - sum(q[i, k] * g[j, k] for k in range(6))) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestRankAtK:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_brute_force(self, seed):
        sim, q_ids, g_ids = _random_instance(seed)
        for k in (1, 5, 10):
            assert rank_at_k(sim, q_ids, g_ids, k) == oracle_rank_at_k(sim, q_ids, g_ids, k)

    def test_correct_item_third(self):
        sim = np.array([[0.9, 0.8, 0.7, 0.1, 0.0, -0.1]])
        g_ids = np.array(["b", "c", "a", "d", "e", "f"])
        q_ids = np.array(["a"])
        assert rank_at_k(sim, q_ids, g_ids, 1) == 0.0
        assert rank_at_k(sim, q_ids, g_ids, 5) == 1.0

    def test_ties_go_to_lower_index(self):
        sim = np.array([[0.5, 0.5]])
        assert rank_at_k(sim, np.array([0]), np.array([0, 1]), 1) == 1.0
        assert rank_at_k(sim, np.array([1]), np.array([0, 1]), 1) == 0.0

    def test_best_match_everywhere(self):
        ids = np.arange(4)
        assert rank_at_k(np.eye(4), ids, ids, 1) == 1.0

    def test_k_below_one(self):
        with pytest.raises(ValueError):
            rank_at_k(np.eye(2), np.arange(2), np.arange(2), 0)

    def test_empty_gallery(self):
        with pytest.raises(DegenerateCorpus):
            rank_at_k(np.zeros((1, 0)), np.array([0]), np.array([]), 1)


class TestMeanAveragePrecision:
    @pytest.mark.parametrize("seed", range(200))
    def test_matches_brute_force(self, seed):
        sim, q_ids, g_ids = _random_instance(seed)
        assert abs(mean_average_precision(sim, q_ids, g_ids) - oracle_map(sim, q_ids, g_ids)) <= 1e-12

    def test_perfect_prefix(self):
        assert average_precision(np.array([True, True, False, False, False])) == 1.0

    def test_relevant_second(self):
        assert average_precision(np.array([False, True, False])) == 0.5

    def test_no_relevant_item(self):
        with pytest.raises(NoRelevantItem):
            mean_average_precision(np.eye(2), np.array([0, 7]), np.array([0, 1]))

    def test_gallery_permutation_keeps_metrics(self):
        rng = np.random.default_rng(5)
        sim = rng.normal(size=(6, 12))
        g_ids = np.repeat(np.arange(6), 2)
        q_ids = np.arange(6)
        perm = rng.permutation(12)
        for k in (1, 5):
            assert rank_at_k(sim[:, perm], q_ids, g_ids[perm], k) == rank_at_k(sim, q_ids, g_ids, k)
        assert mean_average_precision(sim[:, perm], q_ids, g_ids[perm]) == pytest.approx(
            mean_average_precision(sim, q_ids, g_ids), abs=1e-12)


class TestEvaluateCorpus:
    def test_separable_embeddings(self):
        ids = np.repeat(np.arange(10), 2)
        emb = np.eye(10)[ids]
        report = evaluate_corpus(EvalCorpus(emb, ids, emb, ids))
        assert report.r1 == 1.0
        assert report.map == 1.0
        assert (report.Q, report.G) == (20, 20)

    def test_random_embeddings_near_chance(self):
        n = 100
        r1 = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            ids = np.arange(n)
            report = evaluate_corpus(EvalCorpus(_unit_rows(rng, n, 32), ids, _unit_rows(rng, n, 32), ids))
            r1.append(report.r1)
        sigma = np.sqrt(0.01 * 0.99 / (n * len(r1)))
        assert abs(np.mean(r1) - 0.01) <= 3 * sigma

    def test_report_orders_rank_metrics(self):
        with pytest.raises(ValueError):
            EvalReport(r1=0.5, r5=0.4, r10=0.6, map=0.3, Q=1, G=1)

    def test_flat_text_and_json(self):
        report = EvalReport(r1=0.25, r5=0.5, r10=1.0, map=0.4, Q=4, G=8, query_source="template")
        assert report.to_flat_text().splitlines()[:2] == ["r1=0.25", "r5=0.5"]
        assert json.loads(report.to_json())["G"] == 8
