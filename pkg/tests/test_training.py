import csv

import numpy as np
import pytest

from relpat.evaluation import KGEScorer, evaluate
from relpat.models import (FAMILIES, TrainConfig, TrainingError, init_params, negative_sample, save_checkpoint,
                           train, write_log)
from relpat.rules import ConfigError


def test_negative_sampling_contract(toy):
    batch = toy.train[:10]
    with pytest.raises(ConfigError):
        negative_sample(batch, toy, 0, np.random.default_rng(0))
    a = negative_sample(batch, toy, 5, np.random.default_rng(7))
    b = negative_sample(batch, toy, 5, np.random.default_rng(7))
    assert np.array_equal(a.triples, b.triples) and np.array_equal(a.replaced_head, b.replaced_head)
    assert a.triples.shape == (10, 5, 3)
    # the unreplaced side and the relation are kept
    assert (a.triples[..., 1] == batch[:, None, 1]).all()
    kept_tail = a.triples[..., 2] == batch[:, None, 2]
    kept_head = a.triples[..., 0] == batch[:, None, 0]
    assert (kept_tail[a.replaced_head]).all() and (kept_head[~a.replaced_head]).all()
    known = {tuple(x) for x in toy.train.tolist()}
    flags = [tuple(x) in known for x in a.triples.reshape(-1, 3).tolist()]
    assert flags == a.known.ravel().tolist()


def test_corruption_rate(toy):
    neg = negative_sample(toy.train[:1].repeat(100, 0), toy, 100, np.random.default_rng(1))
    assert abs(neg.replaced_head.mean() - 0.5) <= 0.02


def test_bernoulli_mode(toy):
    neg = negative_sample(toy.train, toy, 4, np.random.default_rng(1), mode="bernoulli")
    assert neg.triples.shape == (len(toy.train), 4, 3)


def test_epochs_zero_returns_initialization(toy):
    res = train(toy, "RotatE", TrainConfig(dim=8, epochs=0, seed=3))
    init = init_params("RotatE", toy.n_entities, toy.n_relations, 8, seed=3)
    assert res.params.array_equal(init)
    assert res.log == []


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_same_seed_bit_identical(tmp_path, toy, name):
    cfg = TrainConfig(dim=8, epochs=3, eval_every=1, seed=5)
    a, b = train(toy, name, cfg), train(toy, name, cfg)
    save_checkpoint(a.params, tmp_path / "a")
    save_checkpoint(b.params, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert a.log == b.log
    c = train(toy, name, TrainConfig(dim=8, epochs=3, eval_every=1, seed=6))
    assert not c.final.array_equal(a.final)


@pytest.mark.parametrize("name", ["RotatE", "HAKE"])
def test_phases_stay_wrapped(toy, name):
    res = train(toy, name, TrainConfig(dim=8, epochs=5, lr=2.0, seed=0))
    fam = res.final.fam
    for table, blocks in ((res.final.entity, fam.entity_phase_blocks), (res.final.relation, fam.relation_phase_blocks)):
        for blk in blocks:
            part = table[:, blk * 8:(blk + 1) * 8]
            assert (part >= 0).all() and (part < 2 * np.pi).all()


def test_transe_fits_toy_graph(toy):
    cfg = TrainConfig(dim=32, epochs=500, batch_size=16, negatives=8, lr=0.05, eval_every=50, patience=100)
    res = train(toy, "TransE", cfg)
    assert evaluate(KGEScorer(res.final), toy.train, toy).mrr >= 0.9


def test_early_stopping_keeps_best(toy):
    cfg = TrainConfig(dim=16, epochs=40, eval_every=2, patience=2, seed=1)
    res = train(toy, "DistMult", cfg)
    evaluated = [row for row in res.log if row["valid_mrr"] == row["valid_mrr"]]
    assert res.best_mrr == max(row["valid_mrr"] for row in evaluated)
    assert evaluate(KGEScorer(res.params), toy.valid, toy).mrr == pytest.approx(res.best_mrr, abs=1e-12)


def test_divergence_aborts_with_checkpoint(toy):
    with pytest.raises(TrainingError) as exc:
        train(toy, "DistMult", TrainConfig(dim=8, epochs=50, lr=1e30, seed=0, eval_every=1))
    assert exc.value.checkpoint is not None
    assert np.isfinite(exc.value.checkpoint.entity).all()


def test_filtered_negatives_runs(toy):
    res = train(toy, "TransE", TrainConfig(dim=8, epochs=2, filter_negatives=True, optimizer="adam", lr=0.01))
    assert np.isfinite(res.final.entity).all()


def test_config_validation(toy):
    with pytest.raises(ConfigError):
        train(toy, "TransE", TrainConfig(negatives=0))
    with pytest.raises(ConfigError):
        train(toy, "TransE", TrainConfig(optimizer="rmsprop"))


def test_log_csv(tmp_path, toy):
    res = train(toy, "TransE", TrainConfig(dim=8, epochs=4, eval_every=2))
    write_log(tmp_path / "log.csv", res.log)
    rows = list(csv.reader(open(tmp_path / "log.csv")))
    assert rows[0] == ["epoch", "loss", "valid_mrr"] and len(rows) == 5
