import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relpat.models import (FAMILIES, CheckpointError, ModelParameters, adversarial_weights, compose_relations,
                           get_family, init_params, inverse_relation, load_checkpoint, loss_and_grad, path_score,
                           read_checkpoint_header, save_checkpoint, score, score_all_heads, score_all_tails,
                           score_vec)

from oracles import central_difference, relative_error

NAMES = sorted(FAMILIES)
NORM_PRESERVING = ("TransE", "RotatE")


def params_for(name, seed=0, E=7, R=3, d=8):
    return init_params(name, E, R, d, seed=seed, dtype=np.float64)


def grad_errors(name, seed, d=8):
    """Relative error of analytic score gradients against central differences."""
    fam = get_family(name)
    rng = np.random.default_rng(seed)
    P = params_for(name, seed, d=d)
    h, r, t = P.entity[0].copy(), P.relation[1].copy(), P.entity[2].copy()
    extras = {k: v + rng.uniform(0.1, 0.5) for k, v in P.extras.items()}
    _, gh, gr, gt, gx = fam.grad(h, r, t, extras)
    f = lambda: float(fam.score(h, r, t, extras))  # noqa: E731
    errs = [relative_error(gh, central_difference(f, h)), relative_error(gr, central_difference(f, r)),
            relative_error(gt, central_difference(f, t))]
    for k in extras:
        box = np.array([extras[k]])

        def g():
            return float(fam.score(h, r, t, {**extras, k: box[0]}))
        errs.append(relative_error(gx[k], central_difference(g, box)[0]))
    return max(errs)


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("seed", range(3))
def test_score_gradients(name, seed):
    assert grad_errors(name, seed) <= 1e-4


def _loss_fixed_weights(P, pos, neg, margin, w):
    fam = P.fam
    sp = fam.score(P.entity[pos[:, 0]], P.relation[pos[:, 1]], P.entity[pos[:, 2]], P.extras)
    sn = fam.score(P.entity[neg[..., 0]], P.relation[neg[..., 1]], P.entity[neg[..., 2]], P.extras)
    ls = lambda x: -np.logaddexp(0, -x)  # noqa: E731
    return float(np.mean(-ls(margin + sp) - (w * ls(-margin - sn)).sum(-1)))


@pytest.mark.parametrize("name", NAMES)
def test_loss_gradients(name):
    rng = np.random.default_rng(3)
    P = params_for(name, 3, E=6, R=2, d=4)
    pos = np.array([[0, 0, 1], [2, 1, 3], [0, 1, 1]])
    neg = np.stack([pos] * 4, 1)
    neg[..., 2] = rng.integers(0, 6, (3, 4))
    margin, temp = 2.0, 0.7
    loss, g = loss_and_grad(P, pos, neg, margin, temp)
    sn = P.fam.score(P.entity[neg[..., 0]], P.relation[neg[..., 1]], P.entity[neg[..., 2]], P.extras)
    w = adversarial_weights(sn, temp)
    assert loss == pytest.approx(_loss_fixed_weights(P, pos, neg, margin, w), rel=1e-12)
    f = lambda: _loss_fixed_weights(P, pos, neg, margin, w)  # noqa: E731
    fd_e = central_difference(f, P.entity)
    fd_r = central_difference(f, P.relation)
    dense_e = np.zeros_like(P.entity)
    dense_e[g.entity_rows] = g.entity
    dense_r = np.zeros_like(P.relation)
    dense_r[g.relation_rows] = g.relation
    assert relative_error(dense_e, fd_e) <= 1e-4
    assert relative_error(dense_r, fd_r) <= 1e-4
    # untouched rows get no gradient
    assert set(g.entity_rows.tolist()) == set(np.concatenate([pos[:, [0, 2]].ravel(), neg[..., [0, 2]].ravel()]).tolist())


def test_loss_examples():
    P = params_for("TransE")
    pos = np.array([[0, 0, 1]])
    neg = np.array([[[0, 0, 2], [0, 0, 3], [0, 0, 4]]])
    assert np.allclose(adversarial_weights(np.zeros((1, 3)), 1.0), 1 / 3)
    ent = np.full((5, 4), 10.0)
    ent[2:] = -10.0
    big = ModelParameters("DistMult", 4, ent, np.full((1, 4), 10.0))
    loss, _ = loss_and_grad(big, pos, neg, margin=1.0, temperature=1.0)
    assert loss < 1e-12  # positive score +4000, negatives -4000
    perm = neg[:, [2, 0, 1]]
    assert loss_and_grad(P, pos, neg, 3.0, 1.0)[0] == pytest.approx(loss_and_grad(P, pos, perm, 3.0, 1.0)[0], abs=1e-14)


def test_transe_exact_translation():
    P = ModelParameters("TransE", 2, np.array([[1.0, 0.0], [2.0, 1.0]]), np.array([[1.0, 1.0]]))
    assert score(P, 0, 0, 1) == 0.0
    assert np.argmax(score_all_tails(P, 0, 0)) == 1


@pytest.mark.parametrize("name", NAMES)
def test_identities(name):
    P = params_for(name, 11)
    R = P.n_relations
    for h, r, t in [(0, 0, 1), (3, 2, 5), (6, 1, 6)]:
        assert path_score(P, h, [r], t) == score(P, h, r, t)
        for rr in (r, r + R):
            row = compose_relations(P, [rr])
            assert np.allclose(inverse_relation(P, inverse_relation(P, rr)), row, atol=1e-10, rtol=0)
    assert np.allclose(compose_relations(P, [R + 1]), inverse_relation(P, 1), atol=0)


@pytest.mark.parametrize("name", NORM_PRESERVING)
def test_inverse_swaps_arguments(name):
    P = params_for(name, 5)
    R = P.n_relations
    for h, r, t in [(0, 0, 1), (2, 1, 4), (5, 2, 3)]:
        assert abs(score(P, h, r, t) - path_score(P, t, [r + R], h)) <= 1e-10


@pytest.mark.parametrize("name", ["DistMult", "ComplEx", "DualE"])
def test_inverse_cancels(name):
    P = params_for(name, 9)
    R = P.n_relations
    ident = P.fam.identity(P.dim)
    for h, t in [(0, 1), (4, 2)]:
        expected = score_vec(P, h, ident, t)
        for r in range(R):
            assert abs(path_score(P, h, [r, r + R], t) - expected) <= 1e-10 * max(1, abs(expected))


def test_distmult_identity_is_dot_product():
    P = params_for("DistMult", 2)
    assert abs(path_score(P, 0, [1, 1 + P.n_relations], 3) - P.entity[0] @ P.entity[3]) <= 1e-10


def test_transe_composition():
    P = params_for("TransE", 4)
    P.relation[2] = P.relation[0] + P.relation[1]
    for h, t in [(0, 1), (3, 6)]:
        assert abs(path_score(P, h, [0, 1], t) - score(P, h, 2, t)) <= 1e-10


def test_rotate_pi_symmetry():
    P = params_for("RotatE", 6)
    P.relation[0] = np.pi
    for h, t in [(0, 1), (2, 5)]:
        assert abs(score(P, h, 0, t) - score(P, t, 0, h)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_distmult_symmetric(seed):
    P = params_for("DistMult", seed)
    assert score(P, 0, 1, 2) == pytest.approx(score(P, 2, 1, 0), abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_score_all_matches_scalar(name):
    P = params_for(name, 1, E=30)
    rng = np.random.default_rng(0)
    for _ in range(100):
        h, t, r = rng.integers(0, 30), rng.integers(0, 30), rng.integers(0, 2 * P.n_relations)
        tails = score_all_tails(P, h, r, chunk=7)
        heads = score_all_heads(P, r, t)
        assert len(tails) == len(heads) == 30
        row = compose_relations(P, [r])
        assert tails[t] == pytest.approx(score_vec(P, h, row, t), abs=1e-12)
        assert heads[h] == pytest.approx(score_vec(P, h, row, t), abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_init_ranges(name):
    P = init_params(name, 20, 4, 16, seed=0)
    assert P.entity.dtype == np.float32
    fam = P.fam
    for b in fam.relation_phase_blocks:
        block = P.relation[:, b * 16:(b + 1) * 16]
        assert (block >= 0).all() and (block < 2 * np.pi).all()
    assert np.isfinite(P.entity).all() and np.isfinite(P.relation).all()


def test_inverse_examples():
    P = ModelParameters("TransE", 2, np.zeros((2, 2)), np.array([[1.0, -2.0]]))
    assert inverse_relation(P, 0).tolist() == [-1.0, 2.0]
    Q = ModelParameters("DistMult", 2, np.zeros((2, 2)), np.array([[0.0, 2.0]]))
    inv = inverse_relation(Q, 0)
    assert np.isfinite(inv).all() and inv[1] == 0.5


def test_out_of_range_ids():
    P = params_for("TransE")
    with pytest.raises(IndexError):
        score(P, 99, 0, 0)
    with pytest.raises(IndexError):
        score(P, 0, 3, 0)
    with pytest.raises(IndexError):
        path_score(P, 0, [6], 1)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("name", NAMES)
def test_checkpoint_roundtrip(tmp_path, name, dtype):
    P = init_params(name, 9, 3, 4, seed=2, dtype=dtype)
    path = tmp_path / "m.ckpt"
    save_checkpoint(P, path, vocab_hash="abc", train_config={"dim": 4})
    Q = load_checkpoint(path, family=name, vocab_hash="abc")
    assert P.array_equal(Q)
    assert Q.entity.tobytes() == P.entity.tobytes()
    header = read_checkpoint_header(path)
    assert header["family"] == get_family(name).name and header["dimension"] == 4
    assert header["n_entities"] == 9 and header["train_config"] == {"dim": 4}


def test_checkpoint_errors(tmp_path):
    P = init_params("TransE", 5, 2, 4)
    path = tmp_path / "m.ckpt"
    save_checkpoint(P, path, vocab_hash="abc")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, family="RotatE")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, vocab_hash="other")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
