"""Negative sampling, self-adversarial loss and the training loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..kg import KnowledgeGraph
from ..rules import ConfigError
from .families import get_family
from .params import ModelParameters, init_params

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Non-finite loss or parameters.  ``checkpoint`` holds the last good state."""

    def __init__(self, message, checkpoint: ModelParameters | None = None, batch=None, epoch=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.batch = batch
        self.epoch = epoch


@dataclass
class TrainConfig:
    dim: int = 64
    lr: float = 0.05
    batch_size: int = 128
    negatives: int = 16
    margin: float = 6.0
    adversarial_temperature: float = 1.0
    epochs: int = 100
    patience: int = 5
    seed: int = 0
    optimizer: str = "sgd"
    eval_every: int = 10
    negative_mode: str = "uniform"
    filter_negatives: bool = False
    dtype: str = "float32"
    valid_split: str = "valid"
    valid_max_queries: int = 0

    def validate(self) -> "TrainConfig":
        for name in ("dim", "batch_size", "negatives", "eval_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0 or self.patience < 1:
            raise ConfigError("epochs must be >= 0 and patience >= 1")
        if not (self.lr > 0 and np.isfinite(self.lr)):
            raise ConfigError("lr must be positive")
        if self.adversarial_temperature < 0:
            raise ConfigError("adversarial_temperature must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.negative_mode not in ("uniform", "bernoulli"):
            raise ConfigError(f"unknown negative_mode {self.negative_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# negative sampling ---------------------------------------------------------------

@dataclass
class NegativeBatch:
    triples: np.ndarray       # (B, k, 3)
    replaced_head: np.ndarray  # (B, k) bool
    known: np.ndarray          # (B, k) bool: corruption is a train triple


def head_replace_probability(kg: KnowledgeGraph) -> np.ndarray:
    """Bernoulli-trick probability of corrupting the head, per relation."""
    tr = kg.train
    prob = np.full(kg.n_relations, 0.5)
    for r in range(kg.n_relations):
        rows = tr[tr[:, 1] == r]
        if not len(rows):
            continue
        tph = len(rows) / len(np.unique(rows[:, 0]))
        hpt = len(rows) / len(np.unique(rows[:, 2]))
        prob[r] = tph / (tph + hpt)
    return prob


def negative_sample(batch: np.ndarray, kg: KnowledgeGraph, k: int, rng: np.random.Generator,
                    mode: str = "uniform", head_prob: np.ndarray | None = None) -> NegativeBatch:
    """``k`` corruptions per positive, replacing head or tail by a uniform entity."""
    if k < 1:
        raise ConfigError("need at least one negative per positive (k >= 1)")
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    B = len(batch)
    if mode == "bernoulli":
        if head_prob is None:
            head_prob = head_replace_probability(kg)
        p = head_prob[batch[:, 1]][:, None]
    elif mode == "uniform":
        p = 0.5
    else:
        raise ConfigError(f"unknown negative sampling mode {mode!r}")
    replace_head = rng.random((B, k)) < p
    ents = rng.integers(0, kg.n_entities, size=(B, k))
    neg = np.repeat(batch[:, None, :], k, axis=1)
    neg[..., 0] = np.where(replace_head, ents, neg[..., 0])
    neg[..., 2] = np.where(replace_head, neg[..., 2], ents)
    return NegativeBatch(neg, replace_head, kg.contains_many(neg))


# loss -----------------------------------------------------------------------------

@dataclass
class Gradients:
    entity_rows: np.ndarray
    entity: np.ndarray
    relation_rows: np.ndarray
    relation: np.ndarray
    extras: dict = field(default_factory=dict)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


def adversarial_weights(neg_scores: np.ndarray, temperature: float, mask=None) -> np.ndarray:
    """Softmax of ``temperature * score`` over the negatives (rows); masked entries get 0."""
    z = temperature * neg_scores
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - np.max(z, axis=-1, keepdims=True)
    w = np.exp(z)
    total = w.sum(-1, keepdims=True)
    return np.divide(w, total, out=np.zeros_like(w), where=total > 0)


def loss_and_grad(params: ModelParameters, positives: np.ndarray, negatives: np.ndarray,
                  margin: float, temperature: float, neg_mask: np.ndarray | None = None):
    """Mean self-adversarial loss over the batch and its gradient on touched rows.

    ``negatives`` has shape (B, k, 3).  The softmax weights are constants.
    """
    fam = params.fam
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    negatives = np.asarray(negatives, dtype=np.int64)
    B, k = negatives.shape[:2]
    every = np.concatenate([positives, negatives.reshape(-1, 3)])
    ent, rel = params.entity, params.relation
    f64 = np.float64
    s, gh, gr, gt, gx = fam.grad(ent[every[:, 0]].astype(f64), rel[every[:, 1]].astype(f64),
                                 ent[every[:, 2]].astype(f64), params.extras)
    s_pos, s_neg = s[:B], s[B:].reshape(B, k)
    w = adversarial_weights(s_neg, temperature, neg_mask)

    per = -_log_sigmoid(margin + s_pos) - (w * _log_sigmoid(-margin - s_neg)).sum(-1)
    loss = float(per.mean())
    coef = np.concatenate([-_sigmoid(-margin - s_pos), (w * _sigmoid(margin + s_neg)).ravel()]) / B

    ent_rows, ent_inv = np.unique(np.concatenate([every[:, 0], every[:, 2]]), return_inverse=True)
    ge = np.zeros((len(ent_rows), ent.shape[1]))
    n = len(every)
    np.add.at(ge, ent_inv[:n], coef[:, None] * gh)
    np.add.at(ge, ent_inv[n:], coef[:, None] * gt)
    rel_rows, rel_inv = np.unique(every[:, 1], return_inverse=True)
    grel = np.zeros((len(rel_rows), rel.shape[1]))
    np.add.at(grel, rel_inv, coef[:, None] * gr)
    extras = {name: float((coef * g).sum()) for name, g in gx.items()}
    return loss, Gradients(ent_rows, ge, rel_rows, grel, extras)


# optimizers ---------------------------------------------------------------------

class SGD:
    def __init__(self, params: ModelParameters, lr: float):
        self.lr = lr

    def step(self, params: ModelParameters, g: Gradients):
        params.entity[g.entity_rows] -= (self.lr * g.entity).astype(params.entity.dtype)
        params.relation[g.relation_rows] -= (self.lr * g.relation).astype(params.relation.dtype)
        for name, v in g.extras.items():
            params.extras[name] = float(params.extras[name] - self.lr * v)


class Adam:
    """Row-sparse (lazy) Adam: moments of untouched rows are left alone."""

    def __init__(self, params: ModelParameters, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {"entity": np.zeros(params.entity.shape), "relation": np.zeros(params.relation.shape)}
        self.v = {"entity": np.zeros(params.entity.shape), "relation": np.zeros(params.relation.shape)}
        self.steps = {"entity": np.zeros(len(params.entity), np.int64),
                      "relation": np.zeros(len(params.relation), np.int64)}
        self.xm = {k: 0.0 for k in params.extras}
        self.xv = {k: 0.0 for k in params.extras}
        self.xt = 0

    def _rows(self, table, name, rows, grad):
        m, v, t = self.m[name], self.v[name], self.steps[name]
        t[rows] += 1
        m[rows] = self.b1 * m[rows] + (1 - self.b1) * grad
        v[rows] = self.b2 * v[rows] + (1 - self.b2) * grad * grad
        tt = t[rows][:, None]
        mhat = m[rows] / (1 - self.b1 ** tt)
        vhat = v[rows] / (1 - self.b2 ** tt)
        table[rows] -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(table.dtype)

    def step(self, params: ModelParameters, g: Gradients):
        self._rows(params.entity, "entity", g.entity_rows, g.entity)
        self._rows(params.relation, "relation", g.relation_rows, g.relation)
        if g.extras:
            self.xt += 1
            for name, v in g.extras.items():
                self.xm[name] = self.b1 * self.xm[name] + (1 - self.b1) * v
                self.xv[name] = self.b2 * self.xv[name] + (1 - self.b2) * v * v
                mhat = self.xm[name] / (1 - self.b1 ** self.xt)
                vhat = self.xv[name] / (1 - self.b2 ** self.xt)
                params.extras[name] = float(params.extras[name] - self.lr * mhat / (np.sqrt(vhat) + self.eps))


# training loop ------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParameters          # best-validation parameters
    final: ModelParameters
    log: list                        # dicts with epoch, loss, valid_mrr
    best_epoch: int
    best_mrr: float


def _finite(params: ModelParameters) -> bool:
    return (bool(np.isfinite(params.entity).all()) and bool(np.isfinite(params.relation).all())
            and all(np.isfinite(v) for v in params.extras.values()))


def _validation_mrr(params, kg, split, limit, rng_seed):
    from ..evaluation import KGEScorer, evaluate

    triples = kg.splits[split]
    if limit and len(triples) > limit:
        pick = np.random.default_rng(rng_seed).choice(len(triples), size=limit, replace=False)
        triples = triples[np.sort(pick)]
    return evaluate(KGEScorer(params), triples, kg).mrr


def train(kg: KnowledgeGraph, family, config: TrainConfig | None = None, **overrides) -> TrainResult:
    """Train one model family with early stopping on validation MRR.

    Deterministic given ``config.seed``.  With an empty validation split the
    final parameters are returned.
    """
    config = config or TrainConfig()
    if overrides:
        config = TrainConfig(**{**config.to_dict(), **overrides})
    config.validate()
    fam = get_family(family)
    if len(kg.train) == 0:
        raise ConfigError("train split is empty")
    rng = np.random.default_rng(config.seed)
    params = init_params(fam, kg.n_entities, kg.n_relations, config.dim, rng=rng, dtype=np.dtype(config.dtype))
    params.meta = {"vocab_hash": kg.vocab_hash(), "train_config": config.to_dict()}
    opt = (Adam if config.optimizer == "adam" else SGD)(params, config.lr)
    head_prob = head_replace_probability(kg) if config.negative_mode == "bernoulli" else None
    has_valid = len(kg.splits.get(config.valid_split, ())) > 0

    best, best_mrr, best_epoch, bad = params.copy(), -np.inf, 0, 0
    log = []
    train_triples = kg.train
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_triples))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = train_triples[order[lo:lo + config.batch_size]]
            neg = negative_sample(batch, kg, config.negatives, rng, config.negative_mode, head_prob)
            mask = ~neg.known if config.filter_negatives else None
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grad(params, batch, neg.triples, config.margin,
                                            config.adversarial_temperature, mask)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", best, batch, epoch)
            opt.step(params, grads)
            fam.wrap(params.entity, params.relation, config.dim)
            losses.append(loss)
        if not _finite(params):
            raise TrainingError(f"non-finite parameters at epoch {epoch}", best, None, epoch)
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "valid_mrr": float("nan")}
        stop = False
        if has_valid and (epoch % config.eval_every == 0 or epoch == config.epochs):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    mrr = _validation_mrr(params, kg, config.valid_split, config.valid_max_queries, config.seed)
            except FloatingPointError as exc:
                raise TrainingError(f"non-finite scores at epoch {epoch}: {exc}", best, None, epoch) from None
            row["valid_mrr"] = mrr
            if mrr > best_mrr:
                best, best_mrr, best_epoch, bad = params.copy(), mrr, epoch, 0
            else:
                bad += 1
                stop = bad >= config.patience
        log.append(row)
        logger.info("epoch %d loss %.5f valid_mrr %s", epoch, row["loss"], row["valid_mrr"])
        if stop:
            break
    final = params
    if not has_valid or config.epochs == 0:
        best, best_epoch = final.copy(), len(log)
        best_mrr = float("nan")
    best.meta["best_epoch"] = best_epoch
    return TrainResult(best, final, log, best_epoch, float(best_mrr))


def write_log(path, log) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "valid_mrr"])
        for row in log:
            w.writerow([row["epoch"], repr(row["loss"]), repr(row["valid_mrr"])])
