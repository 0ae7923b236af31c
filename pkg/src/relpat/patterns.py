"""Relational-pattern classification of relations and triples."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .kg import KnowledgeGraph
from .rules import ConfigError, ScoredRule


class PatternType(str, enum.Enum):
    SYMMETRIC = "symmetric"
    INVERSE = "inverse"
    MULTIPLE = "multiple"
    COMPOSITIONAL2 = "compositional2"
    COMPOSITIONAL3 = "compositional3"

    @classmethod
    def parse(cls, value) -> "PatternType":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"sym": "symmetric", "inv": "inverse", "mul": "multiple", "sub": "multiple",
                   "comp2": "compositional2", "comp3": "compositional3", "comp": "compositional2"}
        return cls(aliases.get(key, key))

    @property
    def short(self) -> str:
        return {"symmetric": "sym", "inverse": "inv", "multiple": "mul",
                "compositional2": "comp2", "compositional3": "comp3"}[self.value]


PATTERNS = tuple(PatternType)


def rule_pattern(sr: ScoredRule, n_relations: int):
    """Pattern implied by a chain-form rule's shape, or None (self rule)."""
    chain = sr.rule.chain
    head = sr.rule.head
    if len(chain) == 2:
        return PatternType.COMPOSITIONAL2
    if len(chain) == 3:
        return PatternType.COMPOSITIONAL3
    if len(chain) != 1:
        return None
    (b,) = chain
    if b == head:
        return None
    if b >= n_relations:
        # r(H,T) <- b'(T,H) written in chain form as b'^-1(H,T)
        return PatternType.SYMMETRIC if b - n_relations == head else PatternType.INVERSE
    return PatternType.MULTIPLE


@dataclass
class PatternAssignment:
    """relation -> {pattern: supporting rules}."""

    n_relations: int
    types: dict

    def patterns_of(self, r: int) -> frozenset:
        return frozenset(self.types.get(r, {}))

    def rules(self, r: int, pattern) -> list[ScoredRule]:
        return list(self.types.get(r, {}).get(PatternType.parse(pattern), []))

    def relations(self, pattern) -> list[int]:
        p = PatternType.parse(pattern)
        return sorted(r for r, d in self.types.items() if p in d)

    def counts(self) -> dict:
        return {p: len(self.relations(p)) for p in PATTERNS}

    def rows(self):
        for r in sorted(self.types):
            for p in PATTERNS:
                if p in self.types[r]:
                    yield r, p, len(self.types[r][p])


def classify_relations(rules: Iterable[ScoredRule], n_relations: int, min_pca: float = 0.0,
                       min_hc: float = 0.0) -> PatternAssignment:
    """Assign each relation the patterns its rules exhibit.

    Rules below the PCA/HC thresholds are ignored.  A relation may belong
    to several patterns.
    """
    types: dict[int, dict[PatternType, list]] = {}
    for sr in rules:
        if sr.metrics.pca_confidence < min_pca or sr.metrics.head_coverage < min_hc:
            continue
        p = rule_pattern(sr, n_relations)
        if p is None:
            continue
        types.setdefault(sr.rule.head, {}).setdefault(p, []).append(sr)
    return PatternAssignment(n_relations, types)


def classify_triples(triples: np.ndarray, assignment: PatternAssignment) -> dict[PatternType, np.ndarray]:
    """Split triples by the patterns of their relation; a triple may land in several sets."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    out = {}
    for p in PATTERNS:
        rels = assignment.relations(p)
        out[p] = triples[np.isin(triples[:, 1], rels)]
    return out


@dataclass
class PatternMatrix:
    patterns: tuple
    values: np.ndarray
    sizes: np.ndarray

    @property
    def undefined(self) -> list:
        return [p for p, n in zip(self.patterns, self.sizes) if n == 0]

    def __getitem__(self, key):
        i, j = (self.patterns.index(PatternType.parse(k)) for k in key)
        return self.values[i, j]


def pattern_matrix(assignment: PatternAssignment, patterns: Sequence = PATTERNS) -> PatternMatrix:
    """Overlap ratios ``|R_i & R_j| / |R_i|``; rows of empty patterns are NaN."""
    patterns = tuple(PatternType.parse(p) for p in patterns)
    sets = [set(assignment.relations(p)) for p in patterns]
    k = len(patterns)
    values = np.full((k, k), np.nan)
    for i, si in enumerate(sets):
        if not si:
            continue
        for j, sj in enumerate(sets):
            values[i, j] = len(si & sj) / len(si)
    return PatternMatrix(patterns, values, np.array([len(s) for s in sets]))


def frequency_buckets(triples: np.ndarray, kg: KnowledgeGraph, thresholds: Sequence[int]) -> dict[int, np.ndarray]:
    """Cumulative buckets: threshold -> triples with freq(h) + freq(t) >= threshold."""
    if len(thresholds) == 0:
        raise ConfigError("frequency_buckets needs at least one threshold")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigError("thresholds must be strictly ascending")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    freq = kg.entity_frequency()
    total = freq[triples[:, 0]] + freq[triples[:, 2]]
    return {int(th): triples[total >= th] for th in thresholds}


DEFAULT_BUCKETS = (0, 5, 10, 20, 50, 100)


# exports ---------------------------------------------------------------------

def write_assignment(path, assignment: PatternAssignment, kg: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r, p, n in assignment.rows():
            f.write(f"{kg.relations.label(r)}\t{p.value}\t{n}\n")


def read_assignment_counts(path, kg: KnowledgeGraph) -> dict:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            label, p, n = line.rstrip("\n").split("\t")
            out.setdefault(kg.relations[label], {})[PatternType(p)] = int(n)
    return out


def write_pattern_matrix(path, matrix: PatternMatrix) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pattern"] + [p.value for p in matrix.patterns])
        for p, row in zip(matrix.patterns, matrix.values):
            w.writerow([p.value] + ["nan" if np.isnan(v) else repr(float(v)) for v in row])


def write_bucket_stats(path, buckets: Mapping) -> None:
    """``buckets`` maps pattern -> {threshold: triples}."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pattern", "threshold", "triple_count"])
        for p, per in buckets.items():
            name = p.value if isinstance(p, PatternType) else str(p)
            for th, arr in per.items():
                w.writerow([name, th, len(arr)])
