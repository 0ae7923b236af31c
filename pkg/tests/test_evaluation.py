import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relpat.evaluation import (CSV_HEADER, EvalReport, KGEScorer, Metrics, Query, evaluate, evaluate_per_pattern,
                               rank_from_scores, rank_query, rank_triples, read_report_json, write_report_csv,
                               write_report_json)
from relpat.kg import KnowledgeGraph
from relpat.models import init_params
from relpat.patterns import PATTERNS

from oracles import brute_rank


class TableScorer:
    """Scores looked up in a dense (E, R, E) table."""

    def __init__(self, table):
        self.table = table

    def score_tails(self, h, r):
        return self.table[h, r]

    def score_heads(self, r, t):
        return self.table[:, r, t]


class Transformed:
    def __init__(self, inner, f):
        self.inner, self.f = inner, f

    def score_tails(self, h, r):
        return self.f(self.inner.score_tails(h, r))

    def score_heads(self, r, t):
        return self.f(self.inner.score_heads(r, t))


def table_for(kg, seed, levels=5):
    rng = np.random.default_rng(seed)
    return TableScorer(rng.integers(0, levels, (kg.n_entities, kg.n_relations, kg.n_entities)).astype(float))


def known_completions(kg, q):
    if q.direction == "tail":
        return set(kg.known_tails(q.h, q.r).tolist()) - {q.t}
    return set(kg.known_heads(q.r, q.t).tolist()) - {q.h}


def test_rank_examples():
    assert rank_from_scores(np.array([0.5, 0.9, 0.1]), 1) == 1.0
    assert rank_from_scores(np.array([0.9, 0.9, 0.1]), 0) == 1.5
    assert rank_from_scores(np.array([0.9, 0.9, 0.1]), 1) == 1.5
    assert rank_from_scores(np.array([0.9, 0.9, 0.1]), 1, keep=np.array([False, True, True])) == 1.0
    with pytest.raises(FloatingPointError):
        rank_from_scores(np.array([np.nan, 1.0]), 0)


def test_metric_examples():
    assert Metrics.from_ranks([1, 1]).mrr == 1.0
    m = Metrics.from_ranks([1, 4])
    assert m.mrr == 0.625 and m.hits == {1: 0.5, 3: 0.5, 10: 1.0}
    empty = Metrics.from_ranks([])
    assert empty.count == 0 and not empty.defined and math.isnan(empty.mrr)


def test_ranks_match_full_sort_oracle(toy):
    rng = np.random.default_rng(42)
    scorer = table_for(toy, 0)
    every = np.concatenate([toy.train, toy.valid, toy.test])
    ranks, oracle = [], []
    for i in range(200):
        tr = every[rng.integers(len(every))]
        q = Query.from_triple(tr, "tail" if i % 2 else "head")
        rank = rank_query(scorer, q, toy)
        scores = scorer.score_tails(q.h, q.r) if q.direction == "tail" else scorer.score_heads(q.r, q.t)
        expected = brute_rank(scores.tolist(), q.target, known_completions(toy, q))
        assert rank == expected
        ranks.append(rank)
        oracle.append(expected)
    assert abs(Metrics.from_ranks(ranks).mrr - float(np.mean([1 / r for r in oracle]))) <= 1e-12


def test_evaluate_matches_oracle(toy):
    scorer = table_for(toy, 3)
    report = evaluate(scorer, toy.test, toy)
    recip = []
    for tr in toy.test:
        for d in ("tail", "head"):
            q = Query.from_triple(tr, d)
            scores = scorer.score_tails(q.h, q.r) if d == "tail" else scorer.score_heads(q.r, q.t)
            recip.append(1 / brute_rank(scores.tolist(), q.target, known_completions(toy, q)))
    assert abs(report.mrr - np.mean(recip)) <= 1e-12
    assert report.count == 2 * len(toy.test)
    assert set(report.by_direction) == {"tail", "head"}


def test_single_triple_perfect():
    kg = KnowledgeGraph.from_labeled([("a", "r", "b")], test=[("a", "r", "b")])
    table = np.zeros((2, 1, 2))
    table[0, 0, 1] = 1.0
    assert evaluate(TableScorer(table), kg.test, kg).mrr == 1.0


def test_constant_scorer_averages_ties(toy):
    scorer = TableScorer(np.zeros((toy.n_entities, toy.n_relations, toy.n_entities)))
    report = evaluate(scorer, toy.test, toy)
    assert report.mrr < 0.5


def test_empty_test_set(toy):
    report = evaluate(table_for(toy, 0), np.empty((0, 3), int), toy)
    assert report.count == 0 and math.isnan(report.mrr) and not report.overall.defined


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rank_invariants(seed):
    from relpat.kg import load_toy
    kg = load_toy()
    scorer = table_for(kg, seed, levels=4)
    filtered = rank_triples(scorer, kg.train[:15], kg)
    raw = rank_triples(scorer, kg.train[:15], kg, filtered=False)
    assert (filtered <= raw).all()
    assert (filtered >= 1).all()
    for f in (lambda x: 3 * x - 7, np.exp, lambda x: np.arctan(x) + x ** 3):
        assert np.array_equal(rank_triples(Transformed(scorer, f), kg.train[:15], kg), filtered)
    # raising the target's score never worsens its rank
    h, r, t = kg.train[seed % len(kg.train)]
    before = rank_query(scorer, Query("tail", h, r, t), kg)
    scorer.table[h, r, t] += 1.5
    assert rank_query(scorer, Query("tail", h, r, t), kg) <= before


def test_union_is_weighted_mean(toy):
    scorer = table_for(toy, 9)
    a, b = toy.train[:20], toy.train[20:]
    ra, rb, rall = evaluate(scorer, a, toy), evaluate(scorer, b, toy), evaluate(scorer, toy.train, toy)
    assert rall.mrr == pytest.approx((ra.mrr * ra.count + rb.mrr * rb.count) / (ra.count + rb.count), abs=1e-12)


def test_workers_do_not_change_ranks(toy):
    scorer = KGEScorer(init_params("RotatE", toy.n_entities, toy.n_relations, 8))
    assert np.array_equal(rank_triples(scorer, toy.train, toy, workers=3), rank_triples(scorer, toy.train, toy))


def test_per_pattern(toy):
    scorer = table_for(toy, 5)
    full = evaluate(scorer, toy.train, toy)
    rep = evaluate_per_pattern(scorer, {"everything": toy.train, "part": toy.train[:5], "none": toy.train[:0]}, toy,
                               triples=toy.train, bucket_thresholds=[0, 10])
    assert rep.by_pattern["everything"].mrr == full.mrr
    assert rep.mrr == full.mrr
    assert rep.by_pattern["part"].mrr == evaluate(scorer, toy.train[:5], toy).mrr
    assert rep.by_pattern["none"].count == 0
    assert rep.by_bucket["everything"][0].mrr == full.mrr
    m = rep.overall
    assert 0 < m.mrr <= 1 and m.hits[1] <= m.hits[3] <= m.hits[10] <= 1


def test_report_exports(tmp_path, toy):
    scorer = table_for(toy, 5)
    sets = {p: toy.test for p in PATTERNS[:2]}
    rep = evaluate_per_pattern(scorer, sets, toy, triples=toy.test, bucket_thresholds=[0, 5])
    rep.meta = {"model": "table"}
    write_report_json(tmp_path / "r.json", rep)
    back = read_report_json(tmp_path / "r.json")
    assert back.to_dict() == rep.to_dict()
    write_report_csv(tmp_path / "r.csv", rep, "table", "base")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert tuple(rows[0]) == CSV_HEADER
    assert {row[2] for row in rows[1:]} == {"all", "symmetric", "inverse"}
    assert isinstance(EvalReport.from_dict(rep.to_dict()), EvalReport)
