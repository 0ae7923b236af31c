"""Model parameters, scoring entry points and checkpoints."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .families import Family, get_family


class CheckpointError(Exception):
    pass


@dataclass
class ModelParameters:
    family: str
    dim: int
    entity: np.ndarray
    relation: np.ndarray
    extras: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def fam(self) -> Family:
        return get_family(self.family)

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.family, self.dim, self.entity.copy(), self.relation.copy(),
                               dict(self.extras), json.loads(json.dumps(self.meta)))

    def array_equal(self, other: "ModelParameters") -> bool:
        return (self.family == other.family and self.dim == other.dim
                and self.entity.dtype == other.entity.dtype
                and np.array_equal(self.entity, other.entity)
                and np.array_equal(self.relation, other.relation)
                and self.extras == other.extras)


def init_params(family, n_entities: int, n_relations: int, dim: int, rng=None, seed: int = 0,
                dtype=np.float32) -> ModelParameters:
    fam = get_family(family)
    rng = rng if rng is not None else np.random.default_rng(seed)
    ent, rel, extras = fam.init(n_entities, n_relations, dim, rng, dtype)
    return ModelParameters(fam.name, dim, ent, rel, extras)


def _check_entity(params, e):
    e = np.asarray(e)
    if e.size and (e.min() < 0 or e.max() >= params.n_entities):
        raise IndexError(f"entity id out of range [0, {params.n_entities})")


def relation_vector(params: ModelParameters, r: int) -> np.ndarray:
    """Relation row; ids ``>= R`` resolve to the formal inverse of ``r - R``."""
    R = params.n_relations
    if not 0 <= r < 2 * R:
        raise IndexError(f"relation id {r} out of range [0, {2 * R})")
    if r < R:
        return params.relation[r]
    return params.fam.invert(params.relation[r - R])


def inverse_relation(params: ModelParameters, r) -> np.ndarray:
    """Formal inverse of a relation id, or of a raw relation row."""
    if np.ndim(r) == 0:
        return params.fam.invert(relation_vector(params, int(r)))
    return params.fam.invert(np.asarray(r))


def score(params: ModelParameters, h, r, t) -> np.ndarray:
    """Plausibility of ``(h, r, t)``; ids may be arrays of equal shape."""
    h, r, t = np.asarray(h), np.asarray(r), np.asarray(t)
    _check_entity(params, h)
    _check_entity(params, t)
    if r.size and (r.min() < 0 or r.max() >= params.n_relations):
        raise IndexError(f"relation id out of range [0, {params.n_relations})")
    out = params.fam.score(params.entity[h], params.relation[r], params.entity[t], params.extras)
    return out if out.ndim else float(out)


def score_vec(params: ModelParameters, h, rel_row: np.ndarray, t):
    """Score with an explicit relation row (e.g. an inverse or composition)."""
    out = params.fam.score(params.entity[np.asarray(h)], rel_row, params.entity[np.asarray(t)], params.extras)
    return out if np.ndim(out) else float(out)


def compose_relations(params: ModelParameters, chain: Sequence[int]) -> np.ndarray:
    if len(chain) == 0:
        raise ValueError("empty relation chain")
    return params.fam.compose([relation_vector(params, int(b)) for b in chain])


def path_score(params: ModelParameters, h: int, chain: Sequence[int], t: int) -> float:
    """Compositional score of ``h -chain-> t``; equals :func:`score` for one hop."""
    _check_entity(params, h)
    _check_entity(params, t)
    return score_vec(params, h, compose_relations(params, chain), t)


def _all(params, anchor_row, rel_row, side, chunk):
    fam = params.fam
    ent = params.entity
    out = np.empty(len(ent), dtype=np.result_type(ent.dtype, rel_row.dtype))
    for lo in range(0, len(ent), chunk):
        block = ent[lo:lo + chunk]
        if side == "tail":
            out[lo:lo + chunk] = fam.score(anchor_row[None], rel_row[None], block, params.extras)
        else:
            out[lo:lo + chunk] = fam.score(block, rel_row[None], anchor_row[None], params.extras)
    return out


def score_all_tails(params: ModelParameters, h: int, r, chunk: int = 65536) -> np.ndarray:
    """Scores of ``(h, r, e)`` for every entity ``e``.  ``r`` is an id or a relation row."""
    _check_entity(params, h)
    row = relation_vector(params, int(r)) if np.ndim(r) == 0 else np.asarray(r)
    return _all(params, params.entity[h], row, "tail", chunk)


def score_all_heads(params: ModelParameters, r, t: int, chunk: int = 65536) -> np.ndarray:
    """Scores of ``(e, r, t)`` for every entity ``e``."""
    _check_entity(params, t)
    row = relation_vector(params, int(r)) if np.ndim(r) == 0 else np.asarray(r)
    return _all(params, params.entity[t], row, "head", chunk)


# checkpoints ---------------------------------------------------------------------

_MAGIC = b"RPCKPT1\n"


def save_checkpoint(params: ModelParameters, path, vocab_hash: str | None = None, train_config: dict | None = None):
    """Write a JSON header followed by raw little-endian arrays.

    float32 tables are written as ``<f4``; float64 tables keep ``<f8`` so the
    round trip stays lossless.
    """
    meta = dict(params.meta)
    if vocab_hash is not None:
        meta["vocab_hash"] = vocab_hash
    if train_config is not None:
        meta["train_config"] = train_config
    arrays = []
    offset = 0
    blobs = []
    for name in ("entity", "relation"):
        arr = getattr(params, name)
        dt = np.dtype(arr.dtype).newbyteorder("<")
        if dt.kind != "f" or dt.itemsize not in (4, 8):
            raise CheckpointError(f"unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr, dtype=dt).tobytes()
        arrays.append({"name": name, "shape": list(arr.shape), "dtype": dt.str, "offset": offset,
                       "nbytes": len(blob)})
        offset += len(blob)
        blobs.append(blob)
    header = {
        "family": params.family,
        "dimension": params.dim,
        "n_entities": params.n_entities,
        "n_relations": params.n_relations,
        "extras": {k: float(v) for k, v in params.extras.items()},
        "arrays": arrays,
        **meta,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(raw)))
        f.write(raw)
        for blob in blobs:
            f.write(blob)


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<Q", f.read(8))
        return json.loads(f.read(n).decode("utf-8"))


def load_checkpoint(path, family: str | None = None, vocab_hash: str | None = None) -> ModelParameters:
    """Load a checkpoint, validating family and vocabulary hash when given."""
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(n).decode("utf-8"))
        payload = f.read()
    if family is not None and get_family(family).name != header["family"]:
        raise CheckpointError(f"{path}: checkpoint family {header['family']!r}, expected {get_family(family).name!r}")
    if vocab_hash is not None and header.get("vocab_hash") != vocab_hash:
        raise CheckpointError(f"{path}: checkpoint was trained on a different vocabulary")
    tables = {}
    for spec in header["arrays"]:
        buf = payload[spec["offset"]:spec["offset"] + spec["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(spec["dtype"])).reshape(spec["shape"])
        tables[spec["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    meta = {k: v for k, v in header.items()
            if k not in ("family", "dimension", "n_entities", "n_relations", "extras", "arrays")}
    if tables["entity"].shape[0] != header["n_entities"] or tables["relation"].shape[0] != header["n_relations"]:
        raise CheckpointError(f"{path}: table shapes disagree with header")
    return ModelParameters(header["family"], int(header["dimension"]), tables["entity"], tables["relation"],
                           dict(header["extras"]), meta)
