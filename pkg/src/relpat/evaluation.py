"""Filtered link-prediction ranking and per-pattern / per-bucket reports."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .kg import KnowledgeGraph
from .models.params import ModelParameters, score_all_heads, score_all_tails

DIRECTIONS = ("tail", "head")
HITS = (1, 3, 10)


class Scorer(Protocol):
    def score_tails(self, h: int, r: int) -> np.ndarray: ...

    def score_heads(self, r: int, t: int) -> np.ndarray: ...


class KGEScorer:
    """Plain embedding scores."""

    def __init__(self, params: ModelParameters):
        self.params = params

    def score_tails(self, h, r):
        return score_all_tails(self.params, h, r)

    def score_heads(self, r, t):
        return score_all_heads(self.params, r, t)


@dataclass(frozen=True)
class Query:
    direction: str  # "tail": (h, r, ?) ; "head": (?, r, t)
    h: int
    r: int
    t: int

    @property
    def anchor(self) -> int:
        return self.h if self.direction == "tail" else self.t

    @property
    def target(self) -> int:
        return self.t if self.direction == "tail" else self.h

    @classmethod
    def from_triple(cls, triple, direction):
        h, r, t = (int(x) for x in triple)
        return cls(direction, h, r, t)


def rank_from_scores(scores: np.ndarray, target: int, keep: np.ndarray | None = None) -> float:
    """``1 + #greater + #ties / 2`` among kept candidates other than the target."""
    scores = np.asarray(scores)
    s = scores[target]
    if not np.isfinite(s):
        raise FloatingPointError(f"non-finite target score {s}")
    greater = scores > s
    tied = scores == s
    if keep is not None:
        greater &= keep
        tied &= keep
    return 1.0 + float(np.count_nonzero(greater)) + (float(np.count_nonzero(tied)) - 1.0) / 2.0


def query_scores(scorer: Scorer, q: Query) -> np.ndarray:
    if q.direction == "tail":
        return scorer.score_tails(q.h, q.r)
    if q.direction == "head":
        return scorer.score_heads(q.r, q.t)
    raise ValueError(f"direction must be 'head' or 'tail', got {q.direction!r}")


def rank_query(scorer: Scorer, query: Query, kg: KnowledgeGraph, filtered: bool = True) -> float:
    scores = query_scores(scorer, query)
    keep = kg.filter_mask(query.direction, query.anchor, query.r, query.target) if filtered else None
    return rank_from_scores(scores, query.target, keep)


def rank_triples(scorer: Scorer, triples: np.ndarray, kg: KnowledgeGraph,
                 directions: Sequence[str] = DIRECTIONS, filtered: bool = True, workers: int = 1) -> np.ndarray:
    """Ranks with shape ``(n_triples, len(directions))``."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    queries = [Query.from_triple(tr, d) for tr in triples for d in directions]

    def one(q):
        return rank_query(scorer, q, kg, filtered)

    if workers > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ranks = list(pool.map(one, queries, chunksize=max(1, len(queries) // (4 * workers))))
    else:
        ranks = [one(q) for q in queries]
    return np.asarray(ranks, dtype=np.float64).reshape(len(triples), len(directions))


@dataclass
class Metrics:
    mrr: float
    hits: dict
    count: int

    @property
    def defined(self) -> bool:
        return self.count > 0

    @classmethod
    def from_ranks(cls, ranks) -> "Metrics":
        ranks = np.asarray(ranks, dtype=np.float64).ravel()
        if len(ranks) == 0:
            return cls(float("nan"), {n: float("nan") for n in HITS}, 0)
        return cls(float(np.mean(1.0 / ranks)), {n: float(np.mean(ranks <= n)) for n in HITS}, len(ranks))

    def to_dict(self) -> dict:
        out = {"mrr": self.mrr, "count": self.count, "defined": self.defined}
        out.update({f"hits@{n}": v for n, v in self.hits.items()})
        return out

    def items(self):
        yield "mrr", self.mrr
        for n, v in self.hits.items():
            yield f"hits@{n}", v
        yield "count", float(self.count)


@dataclass
class EvalReport:
    overall: Metrics
    by_direction: dict = field(default_factory=dict)
    by_pattern: dict = field(default_factory=dict)
    by_bucket: dict = field(default_factory=dict)   # pattern -> {threshold: Metrics}
    meta: dict = field(default_factory=dict)

    @property
    def mrr(self) -> float:
        return self.overall.mrr

    @property
    def count(self) -> int:
        return self.overall.count

    def hits(self, n: int) -> float:
        return self.overall.hits[n]

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "overall": self.overall.to_dict(),
            "by_direction": {k: m.to_dict() for k, m in self.by_direction.items()},
            "by_pattern": {k: m.to_dict() for k, m in self.by_pattern.items()},
            "by_bucket": {p: {str(th): m.to_dict() for th, m in per.items()} for p, per in self.by_bucket.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        def m(x):
            return Metrics(float(x["mrr"]), {n: float(x[f"hits@{n}"]) for n in HITS}, int(x["count"]))
        return cls(
            overall=m(d["overall"]),
            by_direction={k: m(v) for k, v in d.get("by_direction", {}).items()},
            by_pattern={k: m(v) for k, v in d.get("by_pattern", {}).items()},
            by_bucket={p: {int(th): m(v) for th, v in per.items()} for p, per in d.get("by_bucket", {}).items()},
            meta=dict(d.get("meta", {})),
        )

    def rows(self, model: str = "", spa_mode: str = "base"):
        """Flat rows ``(model, spa_mode, pattern, bucket, metric, value)``."""
        for name, v in self.overall.items():
            yield model, spa_mode, "all", "all", name, v
        for p, met in self.by_pattern.items():
            for name, v in met.items():
                yield model, spa_mode, p, "all", name, v
        for p, per in self.by_bucket.items():
            for th, met in per.items():
                for name, v in met.items():
                    yield model, spa_mode, p, f">={th}", name, v


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(type(x))


def write_report_json(path, report: EvalReport) -> None:
    # NaN is written as null so the file stays strict JSON
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, float) and math.isnan(o):
            return None
        return o

    with open(path, "w", encoding="utf-8") as f:
        json.dump(clean(report.to_dict()), f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def read_report_json(path) -> EvalReport:
    def restore(o):
        if isinstance(o, dict):
            return {k: restore(v) for k, v in o.items()}
        return float("nan") if o is None else o

    with open(path, encoding="utf-8") as f:
        return EvalReport.from_dict(restore(json.load(f)))


CSV_HEADER = ("model", "spa_mode", "pattern", "bucket", "metric", "value")


def write_report_csv(path, report: EvalReport, model: str = "", spa_mode: str = "base") -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for row in report.rows(model, spa_mode):
            w.writerow(list(row[:5]) + [_fmt(row[5])])


def _fmt(v: float) -> str:
    return "nan" if v != v else repr(float(v))


# evaluation entry points ----------------------------------------------------------

class _RankCache:
    """Ranks each distinct triple once across overlapping pattern sets."""

    def __init__(self, scorer, kg, directions, workers):
        self.scorer, self.kg, self.directions, self.workers = scorer, kg, tuple(directions), workers
        self.ranks: dict = {}

    def get(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        codes = self.kg.encode(triples).tolist()
        todo = sorted(set(c for c in codes if c not in self.ranks))
        if todo:
            by_code = {c: tr for c, tr in zip(codes, triples)}
            fresh = rank_triples(self.scorer, np.array([by_code[c] for c in todo]), self.kg,
                                 self.directions, workers=self.workers)
            self.ranks.update(zip(todo, fresh))
        if not codes:
            return np.empty((0, len(self.directions)))
        return np.stack([self.ranks[c] for c in codes])


def _metrics_from(ranks, directions):
    by_dir = {d: Metrics.from_ranks(ranks[:, i]) for i, d in enumerate(directions)}
    return Metrics.from_ranks(ranks), by_dir


def evaluate(scorer: Scorer, triples: np.ndarray, kg: KnowledgeGraph, directions: Sequence[str] = DIRECTIONS,
             workers: int = 1) -> EvalReport:
    """Overall filtered metrics over both query directions of every triple.

    An empty triple set yields ``count == 0`` and NaN metrics.
    """
    ranks = rank_triples(scorer, triples, kg, directions, workers=workers)
    overall, by_dir = _metrics_from(ranks, directions)
    return EvalReport(overall, by_dir)


def evaluate_per_pattern(scorer: Scorer, pattern_sets: Mapping, kg: KnowledgeGraph,
                         triples: np.ndarray | None = None, bucket_thresholds: Sequence[int] | None = None,
                         directions: Sequence[str] = DIRECTIONS, workers: int = 1) -> EvalReport:
    """Independent metrics per pattern set, optionally split into frequency buckets.

    ``triples`` (the whole test split) fills the overall entry; without it the
    overall entry covers the union of the pattern sets.
    """
    from .patterns import frequency_buckets

    cache = _RankCache(scorer, kg, directions, workers)
    sets = {getattr(p, "value", str(p)): np.asarray(v, dtype=np.int64).reshape(-1, 3) for p, v in pattern_sets.items()}
    if triples is None:
        stacked = [v for v in sets.values() if len(v)]
        triples = np.unique(np.concatenate(stacked), axis=0) if stacked else np.empty((0, 3), np.int64)
    overall, by_dir = _metrics_from(cache.get(triples), directions)
    report = EvalReport(overall, by_dir)
    for name, arr in sets.items():
        report.by_pattern[name] = Metrics.from_ranks(cache.get(arr))
        if bucket_thresholds:
            buckets = frequency_buckets(arr, kg, bucket_thresholds)
            report.by_bucket[name] = {th: Metrics.from_ranks(cache.get(b)) for th, b in buckets.items()}
    return report
