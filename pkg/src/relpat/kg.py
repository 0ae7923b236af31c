"""Knowledge graph storage, vocabularies and grounding indexes.

Triples are kept as ``(n, 3)`` int64 arrays of ``(head, relation, tail)``.
Relation ids ``0..R-1`` are real relations; id ``k + R`` denotes the formal
inverse of ``k``.  Inverse ids never occur in stored triples.
"""
from __future__ import annotations

import hashlib
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class KGError(Exception):
    """Base class for data errors."""


class ParseError(KGError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class VocabularyError(KGError):
    pass


class DomainError(KGError, IndexError):
    pass


class Vocabulary:
    """Bidirectional label <-> id map; ids follow first-appearance order."""

    def __init__(self, labels: Iterable[str] = ()):
        self.labels: list[str] = []
        self.index: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self.index.get(label)
        if idx is None:
            idx = len(self.labels)
            self.index[label] = idx
            self.labels.append(label)
        return idx

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.index

    def __getitem__(self, label: str) -> int:
        return self.index[label]

    def label(self, idx: int) -> str:
        return self.labels[idx]

    def copy(self) -> "Vocabulary":
        return Vocabulary(self.labels)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.labels == other.labels


def load_tsv(path, entities: Vocabulary, relations: Vocabulary, fixed: bool = False) -> np.ndarray:
    """Read ``head<TAB>relation<TAB>tail`` lines into an id array.

    With ``fixed=False`` unseen labels extend the vocabularies in place;
    otherwise they raise :class:`VocabularyError`.  Duplicate triples are
    dropped (first occurrence kept) with a warning.
    """
    rows = []
    seen = set()
    dupes = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            h, r, t = parts
            if fixed:
                for label, vocab, kind in ((h, entities, "entity"), (r, relations, "relation"), (t, entities, "entity")):
                    if label not in vocab:
                        raise VocabularyError(f"{path}:{lineno}: unknown {kind} {label!r}")
                row = (entities[h], relations[r], entities[t])
            else:
                row = (entities.add(h), relations.add(r), entities.add(t))
            if row in seen:
                dupes += 1
                continue
            seen.add(row)
            rows.append(row)
    if dupes:
        logger.warning("%s: dropped %d duplicate triples", path, dupes)
    return np.asarray(rows, dtype=np.int64).reshape(-1, 3)


def write_vocab(path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for idx, label in enumerate(vocab.labels):
            f.write(f"{label}\t{idx}\n")


def read_vocab(path) -> Vocabulary:
    vocab = Vocabulary()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, lineno, "expected label<TAB>id")
            if int(parts[1]) != len(vocab):
                raise ParseError(path, lineno, "ids must be contiguous from 0")
            vocab.add(parts[0])
    return vocab


@dataclass
class SplitIndex:
    """Grounding indexes over one triple collection."""

    hr2t: dict = field(default_factory=dict)
    rt2h: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    @classmethod
    def build(cls, triples: np.ndarray, n_relations: int) -> "SplitIndex":
        hr2t = defaultdict(list)
        rt2h = defaultdict(list)
        for h, r, t in triples.tolist():
            hr2t[(h, r)].append(t)
            rt2h[(r, t)].append(h)
        order = np.lexsort((triples[:, 2], triples[:, 0], triples[:, 1])) if len(triples) else np.empty(0, int)
        srt = triples[order]
        bounds = np.searchsorted(srt[:, 1], np.arange(n_relations + 1)) if len(srt) else np.zeros(n_relations + 1, int)
        pairs = [srt[bounds[r]:bounds[r + 1]][:, [0, 2]] for r in range(n_relations)]
        return cls(
            hr2t={k: np.array(sorted(v), dtype=np.int64) for k, v in hr2t.items()},
            rt2h={k: np.array(sorted(v), dtype=np.int64) for k, v in rt2h.items()},
            pairs=pairs,
        )


_EMPTY = np.empty(0, dtype=np.int64)
_EMPTY.setflags(write=False)


class KnowledgeGraph:
    """Immutable knowledge graph with train/valid/test splits.

    ``frequency_splits`` selects which splits contribute to entity frequency
    counts (train only by default).
    """

    def __init__(self, entities: Vocabulary, relations: Vocabulary, splits: dict[str, np.ndarray],
                 frequency_splits: Sequence[str] = ("train",)):
        self.entities = entities
        self.relations = relations
        self.splits = {}
        for name in SPLITS:
            arr = np.asarray(splits.get(name, _EMPTY.reshape(0, 3)), dtype=np.int64).reshape(-1, 3)
            arr = arr.copy()
            arr.setflags(write=False)
            self.splits[name] = arr
        for name, arr in splits.items():
            if name not in self.splits:
                raise KGError(f"unknown split {name!r}")
        E, R = len(entities), len(relations)
        for name, arr in self.splits.items():
            if len(arr) and (arr.min() < 0 or arr[:, [0, 2]].max() >= E or arr[:, 1].max() >= R):
                raise DomainError(f"split {name!r} has ids outside the vocabularies")
        self._index = {}
        self.frequency_splits = tuple(frequency_splits)
        freq = np.zeros(E, dtype=np.int64)
        for name in self.frequency_splits:
            arr = self.splits[name]
            np.add.at(freq, arr[:, 0], 1)
            np.add.at(freq, arr[:, 2], 1)
        freq.setflags(write=False)
        self._frequency = freq
        every = np.concatenate([self.splits[s] for s in SPLITS])
        self._all = SplitIndex.build(every, R)

    @classmethod
    def from_directory(cls, path, fixed_eval_vocab: bool = False, **kwargs) -> "KnowledgeGraph":
        """Load ``train.txt`` / ``valid.txt`` / ``test.txt`` from a dataset directory.

        Entities first seen in valid/test extend the vocabulary unless
        ``fixed_eval_vocab`` is set.
        """
        train_path = os.path.join(path, "train.txt")
        if not os.path.exists(train_path):
            raise KGError(f"missing {train_path}")
        ents, rels = Vocabulary(), Vocabulary()
        splits = {"train": load_tsv(train_path, ents, rels)}
        for name in ("valid", "test"):
            p = os.path.join(path, f"{name}.txt")
            if os.path.exists(p):
                splits[name] = load_tsv(p, ents, rels, fixed=fixed_eval_vocab)
        return cls(ents, rels, splits, **kwargs)

    @classmethod
    def from_labeled(cls, train, valid=(), test=(), **kwargs) -> "KnowledgeGraph":
        """Build from iterables of ``(head, relation, tail)`` label triples."""
        ents, rels = Vocabulary(), Vocabulary()
        splits = {}
        for name, rows in (("train", train), ("valid", valid), ("test", test)):
            ids, seen = [], set()
            for h, r, t in rows:
                row = (ents.add(h), rels.add(r), ents.add(t))
                if row not in seen:
                    seen.add(row)
                    ids.append(row)
            splits[name] = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        return cls(ents, rels, splits, **kwargs)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def train(self) -> np.ndarray:
        return self.splits["train"]

    @property
    def valid(self) -> np.ndarray:
        return self.splits["valid"]

    @property
    def test(self) -> np.ndarray:
        return self.splits["test"]

    def inverse(self, r: int) -> int:
        R = self.n_relations
        if not 0 <= r < 2 * R:
            raise DomainError(f"relation id {r} out of range [0, {2 * R})")
        return r + R if r < R else r - R

    def is_inverse(self, r: int) -> bool:
        return r >= self.n_relations

    def relation_label(self, r: int) -> str:
        if r >= self.n_relations:
            return self.relations.label(self.inverse(r)) + "^-1"
        return self.relations.label(r)

    def index(self, split: str = "train") -> SplitIndex:
        if split not in self._index:
            if split not in self.splits:
                raise KGError(f"unknown split {split!r}")
            self._index[split] = SplitIndex.build(self.splits[split], self.n_relations)
        return self._index[split]

    def _check_entity(self, e):
        if not 0 <= e < self.n_entities:
            raise DomainError(f"entity id {e} out of range [0, {self.n_entities})")

    def _check_relation(self, r):
        if not 0 <= r < self.n_relations:
            raise DomainError(f"relation id {r} out of range [0, {self.n_relations})")

    def tails_of(self, h: int, r: int, split: str = "train") -> np.ndarray:
        self._check_entity(h)
        self._check_relation(r)
        return self.index(split).hr2t.get((h, r), _EMPTY)

    def heads_of(self, r: int, t: int, split: str = "train") -> np.ndarray:
        self._check_relation(r)
        self._check_entity(t)
        return self.index(split).rt2h.get((r, t), _EMPTY)

    def pairs_of(self, r: int, split: str = "train") -> np.ndarray:
        """``(n, 2)`` array of ``(head, tail)`` pairs sorted by head then tail."""
        self._check_relation(r)
        return self.index(split).pairs[r]

    def contains(self, h: int, r: int, t: int, split: str = "train") -> bool:
        tails = self.tails_of(h, r, split)
        i = np.searchsorted(tails, t)
        return bool(i < len(tails) and tails[i] == t)

    def triple_keys(self, split: str = "train") -> np.ndarray:
        """Sorted int64 codes ``(h * R + r) * E + t`` of a split's triples."""
        cache = self.__dict__.setdefault("_keys", {})
        if split not in cache:
            arr = self.splits[split]
            keys = np.sort(self.encode(arr))
            keys.setflags(write=False)
            cache[split] = keys
        return cache[split]

    def encode(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64)
        return (triples[..., 0] * self.n_relations + triples[..., 1]) * self.n_entities + triples[..., 2]

    def contains_many(self, triples: np.ndarray, split: str = "train") -> np.ndarray:
        keys = self.triple_keys(split)
        codes = self.encode(triples)
        pos = np.searchsorted(keys, codes)
        pos = np.minimum(pos, max(len(keys) - 1, 0))
        return (keys[pos] == codes) if len(keys) else np.zeros(codes.shape, dtype=bool)

    def entity_frequency(self, e=None):
        """Head plus tail occurrences; the full vector when ``e`` is None."""
        if e is None:
            return self._frequency
        self._check_entity(e)
        return int(self._frequency[e])

    def known_tails(self, h: int, r: int) -> np.ndarray:
        """Tails completing ``(h, r, ?)`` in any split."""
        return self._all.hr2t.get((h, r), _EMPTY)

    def known_heads(self, r: int, t: int) -> np.ndarray:
        return self._all.rt2h.get((r, t), _EMPTY)

    def filter_mask(self, direction: str, anchor: int, r: int, target: int) -> np.ndarray:
        """Boolean mask over entities, True for candidates kept in the filtered setting."""
        self._check_entity(anchor)
        self._check_entity(target)
        self._check_relation(r)
        if direction == "tail":
            known = self.known_tails(anchor, r)
        elif direction == "head":
            known = self.known_heads(r, anchor)
        else:
            raise ValueError(f"direction must be 'head' or 'tail', got {direction!r}")
        mask = np.ones(self.n_entities, dtype=bool)
        mask[known] = False
        mask[target] = True
        return mask

    def filtered_candidates(self, direction: str, anchor: int, r: int, target: int) -> np.ndarray:
        """Candidate entity ids for ``(anchor, r, ?)`` (``direction='tail'``) or
        ``(?, r, anchor)`` (``direction='head'``), known completions removed,
        target kept."""
        return np.flatnonzero(self.filter_mask(direction, anchor, r, target))

    def vocab_hash(self) -> str:
        digest = hashlib.sha256()
        for label in self.entities.labels:
            digest.update(label.encode("utf-8") + b"\n")
        digest.update(b"\x00")
        for label in self.relations.labels:
            digest.update(label.encode("utf-8") + b"\n")
        return digest.hexdigest()

    def stats(self) -> dict:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            **{name: int(len(arr)) for name, arr in self.splits.items()},
        }

    def labels(self, triples: np.ndarray) -> list[tuple[str, str, str]]:
        return [(self.entities.label(h), self.relations.label(r), self.entities.label(t))
                for h, r, t in np.asarray(triples).tolist()]

    def __repr__(self):
        s = self.stats()
        return (f"KnowledgeGraph(entities={s['entities']}, relations={s['relations']}, "
                f"train={s['train']}, valid={s['valid']}, test={s['test']})")


def toy_dataset_path() -> str:
    """Directory of the bundled ~50-triple toy dataset."""
    return os.path.join(os.path.dirname(__file__), "data", "toy")


def load_toy() -> KnowledgeGraph:
    return KnowledgeGraph.from_directory(toy_dataset_path())
