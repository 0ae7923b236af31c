"""Closed-path Horn rule mining with AMIE-style quality metrics.

A rule ``r(H,T) <- b1(H,X1), b2(X1,X2), ..., bn(Xn-1,T)`` is stored in chain
form: a real head relation and a tuple of body relation ids drawn from the
inverse-augmented space (``k + R`` is the inverse of ``k``).

By default groundings are injective: distinct variables bind distinct
entities, so a grounded body is a path without repeated nodes.  Support
counts distinct ``(h, t)`` pairs.
"""
from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .kg import KGError, KnowledgeGraph

logger = logging.getLogger(__name__)

HEAD_VAR, TAIL_VAR = "H", "T"


class RuleError(Exception):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    relation: int
    subject: str
    object: str


@dataclass(frozen=True)
class Rule:
    """Horn rule with head ``head(H, T)``.

    ``body`` holds atoms in any variable layout; ``chain`` is only defined
    once the rule is in canonical chain form.
    """

    head: int
    body: tuple

    @classmethod
    def from_chain(cls, head: int, relations: Sequence[int]) -> "Rule":
        n = len(relations)
        vs = [HEAD_VAR] + [f"X{i}" for i in range(1, n)] + [TAIL_VAR]
        return cls(int(head), tuple(Atom(int(b), vs[i], vs[i + 1]) for i, b in enumerate(relations)))

    @property
    def length(self) -> int:
        return len(self.body)

    def is_chain(self) -> bool:
        n = len(self.body)
        vs = [HEAD_VAR] + [f"X{i}" for i in range(1, n)] + [TAIL_VAR]
        return all(a.subject == vs[i] and a.object == vs[i + 1] for i, a in enumerate(self.body))

    @property
    def chain(self) -> tuple:
        if not self.is_chain():
            raise RuleError("rule is not in canonical chain form")
        return tuple(a.relation for a in self.body)


@dataclass(frozen=True)
class RuleMetrics:
    support: int
    head_coverage: float
    std_confidence: float
    pca_confidence: float
    mean_confidence: float


@dataclass(frozen=True)
class ScoredRule:
    rule: Rule
    metrics: RuleMetrics

    @property
    def head(self):
        return self.rule.head

    @property
    def chain(self):
        return self.rule.chain

    def confidence(self, mode: str = "mean") -> float:
        m = self.metrics
        if mode == "mean":
            return 0.5 * (m.std_confidence + m.pca_confidence)
        if mode == "pca":
            return m.pca_confidence
        raise ConfigError(f"unknown confidence mode {mode!r}")


@dataclass
class MiningConfig:
    max_body_len: int = 3
    min_pca: float = 0.0
    min_hc: float = 0.0
    min_support: int = 1
    confidence_mode: str = "mean"
    injective: bool = True
    workers: int = 1

    def validate(self):
        if self.max_body_len not in (1, 2, 3):
            raise ConfigError(f"max_body_len must be 1, 2 or 3, got {self.max_body_len}")
        if not (0.0 <= self.min_pca <= 1.0 and 0.0 <= self.min_hc <= 1.0):
            raise ConfigError("thresholds must lie in [0, 1]")
        if self.min_support < 0:
            raise ConfigError("min_support must be non-negative")
        if self.confidence_mode not in ("mean", "pca"):
            raise ConfigError(f"unknown confidence mode {self.confidence_mode!r}")


# Named (PCA, HC) threshold presets.
THRESHOLDS = {
    "theta1": (0.9, 0.5),
    "theta2": (0.8, 0.5),
    "theta3": (0.6, 0.3),
    "theta4": (0.4, 0.1),
    "theta5": (0.2, 0.1),
}


def threshold_preset(name: str) -> tuple[float, float]:
    key = name.lower().replace("θ", "theta")
    if key.isdigit():
        key = "theta" + key
    try:
        return THRESHOLDS[key]
    except KeyError:
        raise ConfigError(f"unknown threshold preset {name!r}; choose from {sorted(THRESHOLDS)}") from None


def inverse_id(b: int, n_relations: int) -> int:
    return b + n_relations if b < n_relations else b - n_relations


def canonicalize_to_chain(rule: Rule, n_relations: int) -> Rule:
    """Rewrite a connected body into a forward chain from H to T.

    Atoms traversed backwards are replaced by their formal inverse, so
    ``r(H,T) <- r1(X,H), r2(X,T)`` becomes ``r(H,T) <- r1^-1(H,X1), r2(X1,T)``.
    """
    atoms = list(rule.body)
    if not atoms:
        raise RuleError("empty rule body")
    occurrences: dict[str, int] = {}
    for a in atoms:
        if a.subject == a.object:
            raise RuleError(f"reflexive atom on variable {a.subject}")
        for v in (a.subject, a.object):
            occurrences[v] = occurrences.get(v, 0) + 1
    if occurrences.get(HEAD_VAR) != 1 or occurrences.get(TAIL_VAR) != 1:
        raise RuleError("H and T must each occur in exactly one body atom")
    if any(c != 2 for v, c in occurrences.items() if v not in (HEAD_VAR, TAIL_VAR)):
        raise RuleError("body is not a simple path between H and T")
    chain = []
    used = [False] * len(atoms)
    current = HEAD_VAR
    while current != TAIL_VAR:
        for i, a in enumerate(atoms):
            if used[i]:
                continue
            if a.subject == current:
                chain.append(a.relation)
                current = a.object
                break
            if a.object == current:
                chain.append(inverse_id(a.relation, n_relations))
                current = a.subject
                break
        else:
            raise RuleError("body is disconnected")
        used[i] = True
    if not all(used):
        raise RuleError("body contains atoms off the H-T path")
    return Rule.from_chain(rule.head, chain)


class Grounder:
    """Sparse adjacency matrices over the inverse-augmented relation space."""

    def __init__(self, kg: KnowledgeGraph, split: str = "train", injective: bool = True):
        self.kg = kg
        self.injective = injective
        self.E = kg.n_entities
        self.R = kg.n_relations
        triples = kg.splits[split]
        self.split = split
        self._adj = {}
        h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
        # all edges in 2R space, keyed by (src, dst)
        src = np.concatenate([h, t])
        dst = np.concatenate([t, h])
        rel = np.concatenate([r, r + self.R])
        key = src * self.E + dst
        order = np.lexsort((rel, key))
        self.edge_key = key[order]
        self.edge_rel = rel[order]
        self.edge_src = src[order]
        self.edge_dst = dst[order]
        # open-addressing table: edge key -> range of its relations in edge_rel
        ukeys, ustart, ucount = np.unique(self.edge_key, return_index=True, return_counts=True)
        self._table = _KeyTable(ukeys, ustart, ucount)
        # out-adjacency in 2R space: sorted by src, then rel, then dst
        order = np.lexsort((dst, rel, src))
        self.out_src = src[order]
        self.out_rel = rel[order]
        self.out_dst = dst[order]
        self.out_ptr = np.searchsorted(self.out_src, np.arange(self.E + 1))
        self.head_keys = {}
        self.domain = {}
        for rr in range(self.R):
            pairs = kg.pairs_of(rr, split)
            self.head_keys[rr] = np.sort(pairs[:, 0] * self.E + pairs[:, 1])
            dom = np.zeros(self.E, dtype=bool)
            dom[pairs[:, 0]] = True
            self.domain[rr] = dom
        self._rowcounts = lru_cache(maxsize=4096)(self._body_rowcounts)

    def adjacency(self, b: int) -> sp.csr_matrix:
        if b not in self._adj:
            R = self.R
            pairs = self.kg.pairs_of(b if b < R else b - R, self.split)
            if b >= R:
                pairs = pairs[:, ::-1]
            data = np.ones(len(pairs), dtype=np.int64)
            m = sp.csr_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(self.E, self.E))
            if self.injective:
                m = _drop_diagonal(m)
            self._adj[b] = m
        return self._adj[b]

    def body_counts(self, chain: Sequence[int]) -> sp.csr_matrix:
        """Number of body groundings per ``(h, t)`` as a sparse matrix."""
        mats = [self.adjacency(b) for b in chain]
        if len(mats) > 3:
            raise RuleError("body length above 3 is not supported")
        m = mats[0]
        for a in mats[1:]:
            m = m @ a
        if self.injective and len(mats) == 3:
            a1, a2, a3 = mats
            # remove paths with x1 == t or x2 == h; add back paths with both
            d = np.asarray(a2.multiply((a3.T).tocsr()).sum(axis=1)).ravel()
            f = np.asarray(a1.multiply((a2.T).tocsr()).sum(axis=1)).ravel()
            m = (m - a1 @ sp.diags(d) - sp.diags(f) @ a3
                 + a1.multiply((a2.T).tocsr()).multiply(a3))
        m = sp.csr_matrix(m)
        if self.injective:
            m = _drop_diagonal(m)
        m.eliminate_zeros()
        return m

    def body_matrix(self, chain: Sequence[int]) -> sp.csr_matrix:
        m = self.body_counts(chain)
        m.data[:] = 1
        return m

    def _body_rowcounts(self, chain: tuple) -> np.ndarray:
        return np.diff(self.body_counts(chain).indptr)

    def body_keys(self, chain: Sequence[int]) -> np.ndarray:
        m = self.body_counts(chain).tocoo()
        return np.sort(m.row.astype(np.int64) * self.E + m.col)

    def metrics(self, head: int, chain: Sequence[int], support: int | None = None,
                confidence_mode: str = "mean") -> RuleMetrics:
        chain = tuple(int(b) for b in chain)
        if head >= self.R:
            raise RuleError("rule heads must be real relations")
        n_head = len(self.head_keys[head])
        if n_head == 0:
            raise RuleError(f"head relation {head} has no facts; head coverage undefined")
        if support is None:
            support = int(np.intersect1d(self.body_keys(chain), self.head_keys[head], assume_unique=True).size)
        rows = self._rowcounts(chain)
        n_body = int(rows.sum())
        n_pca = int(rows[self.domain[head]].sum())
        std = support / n_body if n_body else 0.0
        pca = support / n_pca if n_pca else 0.0
        mc = pca if confidence_mode == "pca" else 0.5 * (std + pca)
        return RuleMetrics(int(support), support / n_head, std, pca, mc)

    def lookup_pairs(self, src: np.ndarray, dst: np.ndarray):
        """Expand query pairs to every relation linking them.

        Returns ``(query_index, relation)`` arrays.
        """
        hit, lo, counts = self._table.find(src * self.E + dst)
        q, rel = _expand_ranges(lo, lo + counts, self.edge_rel)
        return hit[q], rel

    def expand_out(self, src: np.ndarray):
        """All out-edges of ``src`` in 2R space as ``(query_index, relation, dst)``."""
        lo = self.out_ptr[src]
        hi = self.out_ptr[src + 1]
        counts = hi - lo
        idx = np.repeat(np.arange(len(src)), counts)
        pos = _ranges(lo, counts)
        return idx, self.out_rel[pos], self.out_dst[pos]


class _KeyTable:
    """Linear-probing hash table from int64 keys to ``(start, count)``.

    Lookups are vectorized: every round probes one slot for all unresolved
    keys, so the number of rounds is the longest probe run.
    """

    def __init__(self, keys: np.ndarray, start: np.ndarray, count: np.ndarray):
        bits = max(4, int(np.ceil(np.log2(max(len(keys), 1) * 2.5))))
        self.shift = np.uint64(64 - bits)
        self.mask = (1 << bits) - 1
        self.keys = np.full(1 << bits, -1, dtype=np.int64)
        self.start = np.zeros(1 << bits, dtype=np.int64)
        self.count = np.zeros(1 << bits, dtype=np.int64)
        todo = np.arange(len(keys))
        slot = self._slot(keys)
        while len(todo):
            s = slot[todo]
            free = self.keys[s] == -1
            # among keys racing for the same free slot, the first one wins
            cand, first = np.unique(s[free], return_index=True)
            won = todo[free][first]
            self.keys[cand], self.start[cand], self.count[cand] = keys[won], start[won], count[won]
            placed = np.zeros(len(keys), dtype=bool)
            placed[won] = True
            todo = todo[~placed[todo]]
            slot[todo] = (slot[todo] + 1) & self.mask

    def _slot(self, keys):
        h = keys.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        return (h >> self.shift).astype(np.int64)

    def find(self, keys: np.ndarray):
        """``(query_index, start, count)`` for the keys present in the table."""
        keys = np.asarray(keys, dtype=np.int64)
        slot = self._slot(keys)
        todo = np.arange(len(keys))
        found = []
        while len(todo):
            s = slot[todo]
            k = self.keys[s]
            match = k == keys[todo]
            if match.any():
                found.append(todo[match])
            todo = todo[(k != -1) & ~match]
            slot[todo] = (slot[todo] + 1) & self.mask
        hit = np.sort(np.concatenate(found)) if found else np.empty(0, dtype=np.int64)
        s = slot[hit]
        return hit, self.start[s], self.count[s]


def _drop_diagonal(m: sp.csr_matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m - sp.diags(m.diagonal()))
    m.eliminate_zeros()
    return m


def _ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(starts, counts) + (np.arange(total) - offsets)


def _expand_ranges(lo, hi, values):
    counts = hi - lo
    idx = np.repeat(np.arange(len(lo)), counts)
    return idx, values[_ranges(lo, counts)]


def _count_distinct(groups: np.ndarray, items: np.ndarray, n_items: int):
    """For each group id, the number of distinct items. Returns (group_ids, counts)."""
    if len(groups) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    code = np.unique(groups.astype(np.int64) * n_items + items)
    g = code // n_items
    ids, counts = np.unique(g, return_counts=True)
    return ids, counts


_CHUNK = 2_000_000


def _dangling_support(g: Grounder, hs: np.ndarray) -> np.ndarray:
    """Facts whose head has at least one out-edge per 2R relation."""
    heads, per_head = np.unique(hs, return_counts=True)
    j, rel, _ = g.expand_out(heads)
    code = np.unique(j * (2 * g.R) + rel)
    j, rel = code // (2 * g.R), code % (2 * g.R)
    return np.bincount(rel, weights=per_head[j], minlength=2 * g.R)


def _mine_head(g: Grounder, head: int, cfg: MiningConfig) -> list[ScoredRule]:
    R2 = 2 * g.R
    pairs = g.kg.pairs_of(head, g.split)
    n = len(pairs)
    if n == 0:
        return []
    bound = max(cfg.min_support, 1, cfg.min_hc * n) - 1e-9
    if n < bound:
        return []
    if g.injective:
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    hs, ts = pairs[:, 0], pairs[:, 1]
    found: dict[tuple, int] = {}

    # length 1: relations linking h_i -> t_i directly
    _, rel = g.lookup_pairs(hs, ts)
    for b, c in zip(*np.unique(rel, return_counts=True)):
        if b != head and c >= bound:
            found[(int(b),)] = int(c)

    if cfg.max_body_len >= 2:
        keep_b1 = np.flatnonzero(_dangling_support(g, hs) >= bound)
        for b1 in keep_b1.tolist():
            i1, x1 = _expand_relation(g, hs, b1)
            if g.injective:
                sel = x1 != ts[i1]
                i1, x1 = i1[sel], x1[sel]
            _close(g, found, bound, n, [b1], i1, x1, ts, R2)
            if cfg.max_body_len >= 3:
                _extend(g, found, bound, n, b1, i1, x1, hs, ts, R2)

    out = []
    for chain, support in found.items():
        m = g.metrics(head, chain, support=support, confidence_mode=cfg.confidence_mode)
        if (m.support >= cfg.min_support and m.head_coverage >= cfg.min_hc
                and m.pca_confidence >= cfg.min_pca):
            out.append(ScoredRule(Rule.from_chain(head, chain), m))
    return out


def _expand_relation(g: Grounder, src: np.ndarray, b: int):
    """``(query_index, dst)`` for every ``b``-edge leaving ``src``."""
    adj = g.adjacency(b)
    lo, hi = adj.indptr[src], adj.indptr[src + 1]
    return _expand_ranges(lo, hi, adj.indices.astype(np.int64))


def _close(g, found, bound, n, prefix, qi, x, ts, R2):
    """Record each relation closing ``x -> t_qi`` after the ``prefix`` relations.

    ``prefix`` entries are ints or arrays aligned with ``qi``.
    """
    codes = []
    for lo in range(0, len(qi), _CHUNK):
        q, xs = qi[lo:lo + _CHUNK], x[lo:lo + _CHUNK]
        j, last = g.lookup_pairs(xs, ts[q])
        if len(j) == 0:
            continue
        code = np.zeros(len(j), dtype=np.int64)
        for p in prefix:
            code = code * R2 + (p[lo:lo + _CHUNK][j] if isinstance(p, np.ndarray) else p)
        code = code * R2 + last
        codes.append(np.unique(code * n + q[j]))
    if not codes:
        return
    ids, counts = np.unique(np.unique(np.concatenate(codes)) // n, return_counts=True)
    length = len(prefix) + 1
    for code, c in zip(ids.tolist(), counts.tolist()):
        if c < bound:
            continue
        chain = []
        for _ in range(length):
            chain.append(code % R2)
            code //= R2
        found[tuple(reversed(chain))] = c


def _chunks(costs: np.ndarray, limit: int):
    """Consecutive slices whose summed cost stays near ``limit``."""
    if len(costs) == 0:
        return
    cum = np.cumsum(costs)
    lo = 0
    while lo < len(costs):
        base = cum[lo - 1] if lo else 0
        hi = int(np.searchsorted(cum, base + limit, "right"))
        hi = max(hi, lo + 1)
        yield slice(lo, hi)
        lo = hi


def _extend(g, found, bound, n, b1, i1, x1, hs, ts, R2):
    """Length-3 chains ``b1, b2, b3`` from the partial paths ``h_q -b1-> x1``.

    Each partial path is closed from whichever side is cheaper: the
    out-edges of ``x1`` (then look up ``x2 -> t``) or the edges at ``t``
    (then look up ``x1 -> x2``).
    """
    code = np.unique(i1 * g.E + x1)
    qi, xs = code // g.E, code % g.E
    # prune b2 by the number of facts whose x1 has any b2 edge
    j, rel, _ = g.expand_out(np.unique(xs))
    ent_rel = np.unique(np.unique(xs)[j] * R2 + rel)
    ptr = np.searchsorted(ent_rel // R2, np.arange(g.E + 1))
    first, last = ptr[xs], ptr[xs + 1]
    k, b2s = _expand_ranges(first, last, ent_rel % R2)
    ids, counts = _count_distinct(b2s, qi[k], n)
    keep = np.zeros(R2, dtype=bool)
    keep[ids[counts >= bound]] = True
    if not keep.any():
        return
    deg = np.diff(g.out_ptr)
    left = deg[xs] <= deg[ts[qi]]
    codes = []
    for side in (True, False):
        q, x = qi[left == side], xs[left == side]
        cost = deg[x] if side else deg[ts[q]]
        for sl in _chunks(cost, _CHUNK):
            qq, xx = q[sl], x[sl]
            if side:
                j, b2, x2 = g.expand_out(xx)
                sel = keep[b2]
            else:
                j, bt, x2 = g.expand_out(ts[qq])
                b3 = np.where(bt < g.R, bt + g.R, bt - g.R)
                sel = np.ones(len(j), dtype=bool)
            if g.injective:
                sel &= (x2 != xx[j]) & (x2 != hs[qq[j]]) & (x2 != ts[qq[j]])
            j, x2 = j[sel], x2[sel]
            if side:
                b2 = b2[sel]
                m, b3 = g.lookup_pairs(x2, ts[qq[j]])
                b2 = b2[m]
            else:
                b3 = b3[sel]
                m, b2 = g.lookup_pairs(xx[j], x2)
                b3 = b3[m]
                ok = keep[b2]
                m, b2, b3 = m[ok], b2[ok], b3[ok]
            if len(m):
                codes.append(np.unique((b2 * R2 + b3) * n + qq[j[m]]))
    if not codes:
        return
    ids, counts = np.unique(np.unique(np.concatenate(codes)) // n, return_counts=True)
    for c2, c in zip(ids.tolist(), counts.tolist()):
        if c >= bound:
            found[(b1, c2 // R2, c2 % R2)] = c


def mine_rules(kg: KnowledgeGraph, config: MiningConfig | None = None, split: str = "train",
               grounder: Grounder | None = None, **kwargs) -> list[ScoredRule]:
    """Mine closed-path rules of body length up to ``config.max_body_len``.

    Output is sorted by head relation, then descending PCA confidence, then
    body.
    """
    cfg = config or MiningConfig(**kwargs)
    if config is not None and kwargs:
        cfg = MiningConfig(**{**cfg.__dict__, **kwargs})
    cfg.validate()
    if len(kg.splits[split]) == 0:
        raise KGError(f"split {split!r} is empty")
    g = grounder or Grounder(kg, split, injective=cfg.injective)
    heads = range(kg.n_relations)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            per_head = list(pool.map(lambda r: _mine_head(g, r, cfg), heads))
    else:
        per_head = [_mine_head(g, r, cfg) for r in heads]
    rules = [sr for lst in per_head for sr in lst]
    return sort_rules(rules)


def sort_rules(rules: Iterable[ScoredRule]) -> list[ScoredRule]:
    return sorted(rules, key=lambda s: (s.rule.head, -s.metrics.pca_confidence, len(s.rule.body), s.rule.chain))


def filter_rules(rules: Iterable[ScoredRule], min_pca=0.0, min_hc=0.0, min_support=0) -> list[ScoredRule]:
    return [s for s in rules if s.metrics.pca_confidence >= min_pca and s.metrics.head_coverage >= min_hc
            and s.metrics.support >= min_support]


def rule_metrics(rule: Rule, kg: KnowledgeGraph, split: str = "train", confidence_mode: str = "mean",
                 injective: bool = True, grounder: Grounder | None = None) -> RuleMetrics:
    g = grounder or Grounder(kg, split, injective=injective)
    return g.metrics(rule.head, rule.chain, confidence_mode=confidence_mode)


def rule_support(rule, kg, **kw) -> int:
    return rule_metrics(rule, kg, **kw).support


def head_coverage(rule, kg, **kw) -> float:
    return rule_metrics(rule, kg, **kw).head_coverage


def std_confidence(rule, kg, **kw) -> float:
    return rule_metrics(rule, kg, **kw).std_confidence


def pca_confidence(rule, kg, **kw) -> float:
    return rule_metrics(rule, kg, **kw).pca_confidence


# rule file I/O ---------------------------------------------------------------

def format_rule(rule: Rule, kg: KnowledgeGraph) -> str:
    atoms = ", ".join(f"{kg.relation_label(a.relation)}({a.subject},{a.object})" for a in rule.body)
    return f"{kg.relation_label(rule.head)} <= {atoms}"


def write_rules(path, rules: Sequence[ScoredRule], kg: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sr in rules:
            m = sr.metrics
            f.write(f"{format_rule(sr.rule, kg)}\t{m.support}\t{m.head_coverage!r}\t{m.std_confidence!r}"
                    f"\t{m.pca_confidence!r}\t{m.mean_confidence!r}\n")


_ATOM = re.compile(r"\s*(.+?)\(([A-Z][A-Za-z0-9]*),([A-Z][A-Za-z0-9]*)\)\s*(?:,|$)")


def _relation_id(label: str, kg: KnowledgeGraph) -> int:
    inverse = label.endswith("^-1")
    base = label[:-3] if inverse else label
    if base not in kg.relations:
        raise RuleError(f"unknown relation {base!r}")
    rid = kg.relations[base]
    return rid + kg.n_relations if inverse else rid


def parse_rule(text: str, kg: KnowledgeGraph) -> Rule:
    if " <= " not in text:
        raise RuleError(f"missing ' <= ' in rule {text!r}")
    head_label, body = text.split(" <= ", 1)
    atoms = []
    pos = 0
    while pos < len(body):
        m = _ATOM.match(body, pos)
        if not m:
            raise RuleError(f"cannot parse rule body {body!r}")
        atoms.append(Atom(_relation_id(m.group(1), kg), m.group(2), m.group(3)))
        pos = m.end()
    head = _relation_id(head_label.strip(), kg)
    if head >= kg.n_relations:
        raise RuleError("rule heads must be real relations")
    rule = Rule(head, tuple(atoms))
    return rule if rule.is_chain() else canonicalize_to_chain(rule, kg.n_relations)


def read_rules(path, kg: KnowledgeGraph) -> list[ScoredRule]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise RuleError(f"{path}:{lineno}: expected rule plus 5 metric columns")
            try:
                rule = parse_rule(parts[0], kg)
                sup = int(parts[1])
                hc, std, pca, mc = (float(x) for x in parts[2:])
            except (RuleError, ValueError) as exc:
                raise RuleError(f"{path}:{lineno}: {exc}") from exc
            out.append(ScoredRule(rule, RuleMetrics(sup, hc, std, pca, mc)))
    return out
