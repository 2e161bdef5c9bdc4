import numpy as np
import pytest

from numgrad import central_diff, max_rel_err, random_candidates, random_encoded, tiny_kbs, tiny_vocab

from restobench.corpus import CandidateSet, Vocabulary
from restobench.encoding import CandidateIndex, EncodedExample
from restobench.errors import DataError
from restobench.features import FeatureConfig
from restobench.embeddings import (
    EmbeddingModel,
    EmbeddingRanker,
    TrainHp,
    encode_examples,
    hinge_loss,
    init_model,
    loss_and_grads,
    score,
    train,
)


def identity_model(V: int) -> EmbeddingModel:
    hp = TrainHp(dim=V)
    eye = np.eye(V)
    return EmbeddingModel(eye.copy(), eye.copy(), "", hp, FeatureConfig())


def test_score_empty_input_is_zero():
    model = identity_model(4)
    assert score(model, {}, {0: 1, 2: 3}) == 0.0


def test_score_identity_reduces_to_bag_dot_product():
    model = identity_model(3)
    x = {0: 1, 2: 1}
    y = {0: 1, 1: 1}
    assert score(model, x, y) == pytest.approx(1.0)
    assert score(model, x, x) == pytest.approx(2.0)


def test_score_is_bilinear():
    rng = np.random.default_rng(0)
    hp = TrainHp(dim=5)
    model = EmbeddingModel(rng.normal(size=(5, 7)), rng.normal(size=(5, 7)), "", hp,
                           FeatureConfig())
    x, y = {1: 1, 3: 2}, {0: 2, 6: 1}
    x2 = {k: 2 * v for k, v in x.items()}
    assert score(model, x2, y) == pytest.approx(2 * score(model, x, y), rel=1e-12)


def test_tied_model_scores_own_bag_nonnegative():
    rng = np.random.default_rng(1)
    hp = TrainHp(dim=3, tied=True)
    A = rng.normal(size=(3, 6))
    model = EmbeddingModel(A, None, "", hp, FeatureConfig())
    assert model.B is model.A
    for _ in range(20):
        bag = {int(rng.integers(0, 6)): int(rng.integers(1, 3)) for _ in range(3)}
        assert score(model, bag, bag) >= 0.0


def test_hinge_loss_nonnegative_and_zero_when_margins_met():
    vocab = tiny_vocab()
    rng = np.random.default_rng(2)
    cands = random_candidates(rng, 4)
    cand_index = CandidateIndex(cands, vocab, [])
    hp = TrainHp(dim=3, margin=0.1)
    model = init_model(vocab, hp, FeatureConfig())
    enc = random_encoded(rng, vocab, len(cands), match_type=False, with_memory=False)
    cand_ids = np.arange(len(cands))
    cand_ids[0], cand_ids[enc.gold] = cand_ids[enc.gold], cand_ids[0]
    loss = hinge_loss(model, enc, cand_index, cand_ids)
    assert loss >= 0.0
    # a model that scores the gold far above every negative has zero loss
    words = Vocabulary(["aa", "bb", "cc"])
    toy_cands = CandidateSet(["aa", "bb", "cc"])
    toy_index = CandidateIndex(toy_cands, words, [])
    sep = EmbeddingModel(np.zeros((1, len(words))), np.zeros((1, len(words))), "",
                         TrainHp(dim=1, margin=0.5), FeatureConfig())
    sep.A[0, words.index["aa"]] = 1.0
    sep.B[0, words.index["aa"]] = 10.0
    from restobench.encoding import bag_arrays

    x_idx, x_cnt = bag_arrays({words.index["aa"]: 1})
    toy_enc = EncodedExample(x_idx, x_cnt, 0, 0, None)
    assert hinge_loss(sep, toy_enc, toy_index, np.asarray([0, 1, 2])) == 0.0


def test_argmax_invariant_to_positive_input_scaling():
    rng = np.random.default_rng(3)
    vocab = tiny_vocab()
    cands = random_candidates(rng, 6)
    hp = TrainHp(dim=4)
    model = init_model(vocab, hp, FeatureConfig())
    cand_index = CandidateIndex(cands, vocab, [])
    enc = random_encoded(rng, vocab, len(cands), match_type=False, with_memory=False)
    from restobench.embeddings import full_scores

    base = full_scores(model, enc, cand_index)
    enc_scaled = type(enc)(enc.x_idx, enc.x_cnt * 3.0, enc.gold, 0, None)
    scaled = full_scores(model, enc_scaled, cand_index)
    assert np.allclose(scaled, 3.0 * base)
    assert np.argsort(-base).tolist() == np.argsort(-scaled).tolist()


@pytest.mark.parametrize("match_type", [False, True])
def test_gradients_match_central_differences(match_type):
    # analytic vs numeric gradient on random tiny instances; instances whose
    # hinge slack sits within 1e-3 of the kink are resampled (the max(0, .)
    # is not differentiable there)
    rng = np.random.default_rng(42)
    vocab = tiny_vocab()
    kbs = tiny_kbs() if match_type else []
    cfg = FeatureConfig(match_type=match_type)
    checked = 0
    attempts = 0
    while checked < 25 and attempts < 400:
        attempts += 1
        n_cands = int(rng.integers(3, 7))
        cands = random_candidates(rng, n_cands)
        cand_index = CandidateIndex(cands, vocab, kbs)
        hp = TrainHp(dim=int(rng.integers(2, 5)), margin=float(rng.uniform(0.05, 2.0)),
                     seed=int(rng.integers(0, 1000)))
        model = init_model(vocab, hp, cfg)
        model.A[...] = rng.uniform(-0.5, 0.5, size=model.A.shape)
        model.B[...] = rng.uniform(-0.5, 0.5, size=model.B.shape)
        enc = random_encoded(rng, vocab, n_cands, match_type, with_memory=False)
        others = [i for i in range(n_cands) if i != enc.gold]
        cand_ids = np.asarray([enc.gold] + others)

        fwd_scores = None
        from restobench.embeddings import _forward

        fwd = _forward(model, enc, cand_index, cand_ids)
        slack = hp.margin - fwd.scores[0] + fwd.scores[1:]
        if np.any(np.abs(slack) < 1e-3):
            continue
        loss, grads = loss_and_grads(model, enc, cand_index, cand_ids)
        num_A = central_diff(lambda: hinge_loss(model, enc, cand_index, cand_ids), model.A)
        num_B = central_diff(lambda: hinge_loss(model, enc, cand_index, cand_ids), model.B)
        assert max_rel_err(grads["A"], num_A) < 1e-4
        assert max_rel_err(grads["B"], num_B) < 1e-4
        checked += 1
    assert checked == 25


def test_zero_epochs_returns_initialization(mini_examples, mini_candidates, mini_vocab):
    hp = TrainHp(dim=8, epochs=0, seed=3)
    model, curve = train(mini_examples[1]["train"][:20], mini_examples[1]["val"][:10],
                         mini_candidates, mini_vocab, hp)
    fresh = init_model(mini_vocab, hp, FeatureConfig())
    assert np.array_equal(model.A, fresh.A)
    assert np.array_equal(model.B, fresh.B)
    assert curve == []


def test_training_is_deterministic(mini_examples, mini_candidates, mini_vocab):
    hp = TrainHp(dim=8, epochs=2, negatives=20, seed=5)
    _, c1 = train(mini_examples[1]["train"][:60], mini_examples[1]["val"][:20],
                  mini_candidates, mini_vocab, hp)
    _, c2 = train(mini_examples[1]["train"][:60], mini_examples[1]["val"][:20],
                  mini_candidates, mini_vocab, hp)
    assert c1 == c2


def test_training_learns_mini_task1(mini_examples, mini_candidates, mini_vocab, kb_pair):
    hp = TrainHp(dim=16, epochs=12, negatives=30, seed=7)
    model, curve = train(mini_examples[1]["train"], mini_examples[1]["val"],
                         mini_candidates, mini_vocab, hp, kbs=list(kb_pair))
    assert curve[-1]["train_loss"] < curve[0]["train_loss"]
    assert max(c["val_per_response"] for c in curve) > 0.5


def test_checkpoint_roundtrip(tmp_path, mini_vocab):
    hp = TrainHp(dim=6, seed=11)
    model = init_model(mini_vocab, hp, FeatureConfig(match_type=True))
    path = tmp_path / "emb.npz"
    model.save(path)
    loaded = EmbeddingModel.loadf(path, mini_vocab)
    assert np.array_equal(loaded.A, model.A)
    assert np.array_equal(loaded.B, model.B)
    assert loaded.hp == hp
    assert loaded.cfg == model.cfg


def test_checkpoint_vocab_hash_mismatch_refused(tmp_path, mini_vocab):
    model = init_model(mini_vocab, TrainHp(dim=4), FeatureConfig())
    path = tmp_path / "emb.npz"
    model.save(path)
    other = Vocabulary(["only", "these", "words"])
    with pytest.raises(DataError):
        EmbeddingModel.loadf(path, other)
