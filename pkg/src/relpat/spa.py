"""Training-free rescoring of embedding scores with rule-body scores.

For a relation ``r`` with pattern rule sets, the blended score is

    s = s_kge + sum_p lam_p * sum_rule MC_rule * (s_rule - s_kge) / sum_rule MC_rule

where ``s_rule`` re-reads the triple through the rule body (reversed
arguments for symmetric/inverse rules, the body relation for multiple rules,
the composed relation for two-hop chains).  Terms of several patterns add up.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .models.families import get_family
from .models.params import (ModelParameters, compose_relations, path_score, score, score_all_heads,
                            score_all_tails)
from .patterns import PatternAssignment, PatternType, rule_pattern
from .rules import ConfigError, ScoredRule

SPA_PATTERNS = (PatternType.SYMMETRIC, PatternType.INVERSE, PatternType.MULTIPLE, PatternType.COMPOSITIONAL2)

# per-family blend weights (sym, inv, mul, comp2)
SPA_DEFAULTS = {
    "TransE": (-2.0, -2.0, -3.0, 0.2),
    "RotatE": (-4.0, -1.0, -4.0, -0.01),
    "HAKE": (-2.0, -1.0, -3.0, 0.1),
    "DistMult": (-2.0, -2.0, -4.0, 1e-5),
    "ComplEx": (-2.0, -1.0, -4.0, -0.01),
    "DualE": (-2.0, -1.0, -3.0, -0.01),
    "PairRE": (-10.0, -2.0, -2.0, 0.5),
}


class SpaError(ValueError):
    pass


class DegenerateConfidenceError(SpaError):
    """A non-empty rule set whose confidences sum to zero."""


@dataclass
class SpaConfig:
    lambdas: dict = field(default_factory=lambda: {p: 0.0 for p in SPA_PATTERNS})
    confidence_mode: str = "mean"

    def __post_init__(self):
        lam = {p: 0.0 for p in SPA_PATTERNS}
        for k, v in dict(self.lambdas).items():
            p = PatternType.parse(k)
            if p not in SPA_PATTERNS:
                raise ConfigError(f"no blend weight for pattern {p.value}")
            if not np.isfinite(v):
                raise ConfigError(f"blend weight for {p.value} must be finite")
            lam[p] = float(v)
        self.lambdas = lam
        if self.confidence_mode not in ("mean", "pca"):
            raise ConfigError(f"unknown confidence mode {self.confidence_mode!r}")

    @classmethod
    def for_family(cls, family, confidence_mode: str = "mean", **overrides) -> "SpaConfig":
        name = get_family(family).name
        lam = dict(zip(SPA_PATTERNS, SPA_DEFAULTS[name]))
        lam.update({PatternType.parse(k): v for k, v in overrides.items()})
        return cls(lam, confidence_mode)

    @classmethod
    def zero(cls, confidence_mode: str = "mean") -> "SpaConfig":
        return cls({}, confidence_mode)

    def only(self, *patterns) -> "SpaConfig":
        """Copy with every weight outside ``patterns`` set to zero."""
        keep = {PatternType.parse(p) for p in patterns}
        return SpaConfig({p: (v if p in keep else 0.0) for p, v in self.lambdas.items()}, self.confidence_mode)

    def to_dict(self) -> dict:
        return {"confidence_mode": self.confidence_mode, **{p.short: v for p, v in self.lambdas.items()}}


@dataclass
class PatternRuleSet:
    relation: int
    pattern: PatternType
    rules: list
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def make_ruleset(relation: int, pattern, rules, confidence_mode: str = "mean") -> PatternRuleSet:
    p = PatternType.parse(pattern)
    rules = list(rules)
    w = np.array([sr.confidence(confidence_mode) for sr in rules], dtype=np.float64)
    if len(rules) and not w.sum() > 0:
        raise DegenerateConfidenceError(f"relation {relation}, pattern {p.value}: confidences sum to zero")
    return PatternRuleSet(relation, p, rules, w)


def build_rulesets(assignment: PatternAssignment, confidence_mode: str = "mean") -> dict:
    """relation -> {pattern: PatternRuleSet} for the rescorable patterns."""
    out: dict = {}
    for r in sorted(assignment.types):
        for p in SPA_PATTERNS:
            rules = assignment.rules(r, p)
            if rules:
                out.setdefault(r, {})[p] = make_ruleset(r, p, rules, confidence_mode)
    return out


def blend(base, lam: float, weights, rule_scores):
    """One pattern's correction: ``lam * sum w (s - base) / sum w``."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if len(w) == 0:
        return 0.0
    if not total > 0:
        raise DegenerateConfidenceError("rule confidences sum to zero")
    diff = np.asarray(rule_scores, dtype=np.float64) - base
    return lam * np.tensordot(w, diff, axes=(0, 0)) / total


def _check_rule(params, pattern, sr: ScoredRule, r):
    p = PatternType.parse(pattern)
    if p not in SPA_PATTERNS:
        raise SpaError(f"no rescoring for pattern {p.value}")
    if sr.rule.head != r:
        raise SpaError(f"rule head {sr.rule.head} does not match relation {r}")
    if rule_pattern(sr, params.n_relations) != p:
        raise SpaError(f"rule does not have the shape of a {p.value} rule")
    return p


def spa_score(params: ModelParameters, pattern, rule: ScoredRule, h: int, r: int, t: int) -> float:
    """Score of ``(h, r, t)`` read through one rule body."""
    p = _check_rule(params, pattern, rule, r)
    chain = rule.rule.chain
    R = params.n_relations
    if p is PatternType.SYMMETRIC:
        return score(params, t, r, h)
    if p is PatternType.INVERSE:
        return score(params, t, chain[0] - R, h)
    if p is PatternType.MULTIPLE:
        return score(params, h, chain[0], t)
    return path_score(params, h, chain, t)


class SpaModel:
    """Blended scorer over frozen parameters.

    Implements the ranking scorer interface (``score_tails`` / ``score_heads``).
    """

    def __init__(self, params: ModelParameters, rulesets: Mapping, config: SpaConfig):
        self.params = params
        self.rulesets = rulesets
        self.config = config
        self._composed: dict = {}
        for per in rulesets.values():
            for rs in per.values():
                if len(rs.rules) and not rs.total > 0:
                    raise DegenerateConfidenceError(
                        f"relation {rs.relation}, pattern {rs.pattern.value}: confidences sum to zero")

    def _active(self, r):
        for p, rs in self.rulesets.get(r, {}).items():
            lam = self.config.lambdas.get(p, 0.0)
            if lam != 0.0 and len(rs.rules):
                yield p, lam, rs

    def _row(self, chain):
        key = tuple(chain)
        if key not in self._composed:
            self._composed[key] = compose_relations(self.params, chain)
        return self._composed[key]

    # scalar --------------------------------------------------------------------
    def breakdown(self, h, r, t) -> dict:
        """Base score, per-pattern correction terms and their sum."""
        base = score(self.params, h, r, t)
        terms = {}
        for p, lam, rs in self._active(r):
            s = [spa_score(self.params, p, sr, h, r, t) for sr in rs.rules]
            terms[p] = float(blend(base, lam, rs.weights, s))
        return {"base": base, "terms": terms, "score": base + sum(terms.values())}

    def score(self, h, r, t) -> float:
        return self.breakdown(h, r, t)["score"]

    # vectorized ----------------------------------------------------------------
    def _rule_vector(self, p, sr, anchor, r, side):
        P, R = self.params, self.params.n_relations
        chain = sr.rule.chain
        if side == "tail":  # (anchor, r, ?)
            if p is PatternType.SYMMETRIC:
                return score_all_heads(P, r, anchor)
            if p is PatternType.INVERSE:
                return score_all_heads(P, chain[0] - R, anchor)
            if p is PatternType.MULTIPLE:
                return score_all_tails(P, anchor, chain[0])
            return score_all_tails(P, anchor, self._row(chain))
        if p is PatternType.SYMMETRIC:
            return score_all_tails(P, anchor, r)
        if p is PatternType.INVERSE:
            return score_all_tails(P, anchor, chain[0] - R)
        if p is PatternType.MULTIPLE:
            return score_all_heads(P, chain[0], anchor)
        return score_all_heads(P, self._row(chain), anchor)

    def _all(self, anchor, r, side):
        P = self.params
        base = score_all_tails(P, anchor, r) if side == "tail" else score_all_heads(P, r, anchor)
        out_base = base.astype(np.float64)
        out = out_base.copy()
        for p, lam, rs in self._active(r):
            s = np.stack([self._rule_vector(p, sr, anchor, r, side) for sr in rs.rules]).astype(np.float64)
            out += blend(out_base, lam, rs.weights, s)
        return out

    def score_tails(self, h, r):
        return self._all(h, r, "tail")

    def score_heads(self, r, t):
        return self._all(t, r, "head")


def combined_score(params: ModelParameters, rulesets: Mapping, config: SpaConfig, h: int, r: int, t: int) -> float:
    return SpaModel(params, rulesets, config).score(h, r, t)


def combined_score_all_tails(params, rulesets, config, h, r) -> np.ndarray:
    return SpaModel(params, rulesets, config).score_tails(h, r)


def combined_score_all_heads(params, rulesets, config, r, t) -> np.ndarray:
    return SpaModel(params, rulesets, config).score_heads(r, t)
