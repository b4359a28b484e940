import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from r2net import tensor as T
from r2net.encoder import r2_encode
from r2net.freq import build_freq_table, pred_bias_table
from r2net.hlstm import run_stack
from r2net.relations import (PredicateScores, RelationParams, encode_relations, loss_relations, score_predicates,
                             total_loss)
from r2net.scene import Box, PairSample, Scene
from r2net.tensor import Tensor

from _oracles import check_grads


def _params(ctx=6, seed=0, use_gcn=True, d_f=4, labels=5, preds=3):
    return RelationParams.init(np.random.default_rng(seed), labels, preds, ctx, d_f, hidden_size=4,
                               num_layers=2, embed_size=3, use_gcn=use_gcn)


def test_encoder_input_width_and_composition():
    p = _params()
    rng = np.random.default_rng(1)
    O = Tensor(rng.normal(size=(3, 6)))
    labels = [2, 5, 1]
    U = rng.uniform(0, 2, size=(3, 3, 4))
    assert p.encoder.lstm.layers[0].input_size == 6 + 3
    A, Z = encode_relations(p, O, labels, U)
    x = np.concatenate([O.data, p.label_embed.data[np.array(labels) - 1]], axis=1)
    A_ref, Z_ref = r2_encode(p.encoder, Tensor(x), U)
    np.testing.assert_array_equal(Z.data, Z_ref.data)
    np.testing.assert_array_equal(A.data, A_ref.data)


def test_without_stage2_gcn_z_is_lstm_output():
    p = _params(use_gcn=False)
    rng = np.random.default_rng(2)
    O = Tensor(rng.normal(size=(3, 6)))
    _, Z = encode_relations(p, O, [1, 2, 3], rng.uniform(0, 2, size=(3, 3, 4)), use_gcn=False)
    x = np.concatenate([O.data, p.label_embed.data[[0, 1, 2]]], axis=1)
    np.testing.assert_array_equal(Z.data, run_stack(p.encoder.lstm, Tensor(x)).data)


def test_zero_weights_reduce_to_frequency_posterior():
    scenes = [Scene("a", 10, 10, [Box(0, 0, 1, 1), Box(2, 0, 3, 1)], [1, 2], [(0, 1, 2)])]
    freq = build_freq_table(scenes, 5, 3)
    p = _params()
    p.w_r.data[...] = 0.0
    labels = np.array([1, 2, 4])
    bias = pred_bias_table(freq)[np.ix_(labels - 1, labels - 1)]
    Z = Tensor(np.random.default_rng(3).normal(size=(3, p.subj_W.shape[0])))
    scores = score_predicates(p, Z, np.ones((3, 3, 4)), Tensor(bias))
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(scores.probs[:, i, j], freq.pair_pred_prob[labels[i] - 1, labels[j] - 1],
                                       rtol=1e-12)


def _loop_scores(zs, zo, U, w_r, bias):
    m_count, n = w_r.shape[0], zs.shape[0]
    raw = np.zeros((m_count, n, n))
    for m in range(m_count):
        for i in range(n):
            for j in range(n):
                s = bias[i, j, m]
                for d in range(zs.shape[1]):
                    s += w_r[m, d] * (zs[i, d] * U[i, j, d]) * (zo[j, d] * U[i, j, d])
                raw[m, i, j] = s
    return raw


def test_scores_match_loop_oracle_and_gradients():
    rng = np.random.default_rng(4)
    p = _params()
    Z = T.parameter(rng.normal(size=(3, p.subj_W.shape[0])))
    U = rng.uniform(0, 2, size=(3, 3, 4))
    bias = rng.normal(size=(3, 3, 4))
    scores = score_predicates(p, Z, U, Tensor(bias))
    zs = Z.data @ p.subj_W.data + p.subj_b.data
    zo = Z.data @ p.obj_W.data + p.obj_b.data
    raw = _loop_scores(zs, zo, U, p.w_r.data, bias)
    np.testing.assert_allclose(scores.raw.data, raw, rtol=0, atol=1e-12)
    logp = raw - np.log(np.exp(raw).sum(axis=0, keepdims=True))
    np.testing.assert_allclose(scores.log_probs.data, logp, rtol=0, atol=1e-12)
    sample = PairSample([(0, 1, 2), (2, 1, 0), (1, 0, 3)], "relation")
    named = {k: v for k, v in p.named_parameters() if k in ("subj_W", "subj_b", "obj_W", "obj_b", "w_r")}
    named["Z"] = Z
    errs = check_grads(lambda: loss_relations(score_predicates(p, Z, U, Tensor(bias)), sample), named)
    assert max(errs.values()) < 1e-7, errs


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 1000))
def test_predicate_columns_sum_to_one(n, seed):
    rng = np.random.default_rng(seed)
    p = _params(seed=seed % 7)
    Z = Tensor(rng.normal(scale=3.0, size=(n, p.subj_W.shape[0])))
    scores = score_predicates(p, Z, rng.uniform(0, 2, size=(n, n, 4)), Tensor(rng.normal(size=(n, n, 4))))
    np.testing.assert_allclose(scores.probs.sum(axis=0), 1.0, atol=1e-6)


def _scores(log_probs):
    lp = Tensor(np.asarray(log_probs))
    return PredicateScores(lp, lp)


def test_relation_loss_cases():
    sample = PairSample([(0, 1, 2), (1, 0, 0)], "relation")
    peaked = np.full((7, 2, 2), -60.0)
    peaked[2, 0, 1] = peaked[0, 1, 0] = 0.0
    assert loss_relations(_scores(peaked), sample).item() < 1e-12
    uniform = np.full((7, 2, 2), -math.log(7))
    assert loss_relations(_scores(uniform), sample).item() == pytest.approx(math.log(7), rel=1e-12)
    assert math.log(7) == pytest.approx(1.9459, abs=1e-4)
    probs = np.full((3, 2, 2), 1 / 3)
    probs[:, 0, 1] = [0.1, 0.2, 0.7]
    probs[:, 1, 0] = [0.6, 0.3, 0.1]
    sample = PairSample([(0, 1, 2), (1, 0, 0)], "relation")
    expected = -(math.log(0.7) + math.log(0.6)) / 2
    assert loss_relations(_scores(np.log(probs)), sample).item() == pytest.approx(expected, abs=1e-12)


def test_relation_loss_empty_and_wrong_kind():
    assert loss_relations(_scores(np.zeros((3, 1, 1))), PairSample([], "relation")).item() == 0.0
    with pytest.raises(ValueError):
        loss_relations(_scores(np.zeros((3, 2, 2))), PairSample([], "adjacency"))


def test_total_loss():
    assert total_loss(Tensor(0.0), Tensor(0.0), None).item() == 0.0
    assert total_loss(None, Tensor(1.5), None).item() == 1.5
    assert total_loss(Tensor(0.25), Tensor(1.5), Tensor(2.0)).item() == 0.25 + 1.5 + 2.0


def test_external_label_embedding_hook():
    emb = np.arange(15, dtype=float).reshape(5, 3)
    p = RelationParams.init(np.random.default_rng(0), 5, 3, 6, 4, 4, 2, 3, embedding=emb)
    np.testing.assert_array_equal(p.label_embed.data, emb)
