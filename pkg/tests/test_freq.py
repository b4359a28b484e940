import math

import numpy as np
import pytest

from r2net.freq import build_freq_table, link_bias, link_bias_table, pred_bias, pred_bias_table
from r2net.scene import Box, Scene

EPS = 1e-3


def _scene(labels, relations):
    boxes = [Box(k, 0, k + 1, 1) for k in range(len(labels))]
    return Scene("c", 100, 100, boxes, labels, relations)


def test_counting_rule_for_one_label_pair():
    # dog=1, frisbee=2; predicate 3 twice, predicate 4 once, never unrelated
    scenes = [
        _scene([1, 2], [(0, 1, 3), (1, 0, 1)]),
        _scene([1, 2], [(0, 1, 3)]),
        _scene([1, 2], [(0, 1, 4)]),
    ]
    # make the reverse direction related in every scene too so nothing else interferes
    scenes[1].relations.append((1, 0, 1))
    scenes[2].relations.append((1, 0, 1))
    t = build_freq_table(scenes, 3, 6, EPS)
    D_r = 6
    assert t.pair_pred_prob[0, 1, 3] == pytest.approx((2 + EPS) / (3 + EPS * (D_r + 1)), rel=1e-12)
    assert t.pair_pred_prob[0, 1, 4] == pytest.approx((1 + EPS) / (3 + EPS * (D_r + 1)), rel=1e-12)
    assert t.pair_pred_prob[0, 1, 0] == pytest.approx(EPS / (3 + EPS * (D_r + 1)), rel=1e-12)


def test_unseen_pair_is_uniform():
    t = build_freq_table([_scene([1, 2], [(0, 1, 1)])], 4, 6, EPS)
    np.testing.assert_allclose(t.pair_pred_prob[3, 3], np.full(7, 1 / 7))
    assert t.pair_link_prob[3, 3] == pytest.approx(0.5)


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-8])
def test_always_unrelated_tends_to_background(eps):
    scenes = [_scene([1, 2], []) for _ in range(5)]
    t = build_freq_table(scenes, 2, 4, eps)
    assert t.pair_pred_prob[0, 1, 0] > 1 - 10 * eps


def test_rows_are_distributions():
    rng = np.random.default_rng(0)
    scenes = []
    for _ in range(20):
        n = int(rng.integers(2, 6))
        pairs = {(int(i), int(j)) for i, j in rng.integers(0, n, size=(4, 2)) if i != j}
        scenes.append(_scene([int(v) for v in rng.integers(1, 6, size=n)],
                             [(i, j, int(rng.integers(1, 5))) for i, j in sorted(pairs)]))
    t = build_freq_table(scenes, 5, 4)
    np.testing.assert_allclose(t.pair_pred_prob.sum(axis=2), 1.0, atol=1e-12)
    assert np.all((t.pair_link_prob > 0) & (t.pair_link_prob < 1))


def test_link_bias_symmetry_and_uniform_pred_bias():
    t = build_freq_table([], 3, 4)
    assert t.empty
    assert link_bias(t, 1, 2) == 0.0
    vals = [pred_bias(t, m, 2, 3) for m in range(5)]
    assert max(vals) - min(vals) == pytest.approx(0.0, abs=1e-12)


def test_biases_match_hand_counts():
    # 3 scenes, labels in {1, 2}
    scenes = [
        _scene([1, 2], [(0, 1, 2)]),
        _scene([1, 2, 1], [(0, 1, 2), (2, 1, 1)]),
        _scene([2, 2], [(0, 1, 3)]),
    ]
    t = build_freq_table(scenes, 2, 3, EPS)
    # ordered (1, 2) pairs: s1 0->1 pred 2; s2 0->1 pred 2, 2->1 pred 1  => 3 pairs, related 3
    # ordered (2, 1) pairs: s1 1->0 bg; s2 1->0 bg, 1->2 bg            => 3 pairs, related 0
    # ordered (1, 1) pairs: s2 0->2 bg, 2->0 bg                          => 2 pairs, related 0
    # ordered (2, 2) pairs: s3 0->1 pred 3, 1->0 bg                      => 2 pairs, related 1
    expect_link = {(1, 2): (3 + EPS) / (3 + 2 * EPS), (2, 1): EPS / (3 + 2 * EPS),
                   (1, 1): EPS / (2 + 2 * EPS), (2, 2): (1 + EPS) / (2 + 2 * EPS)}
    for (a, b), p in expect_link.items():
        expected = min(max(math.log(p / (1 - p)), -10.0), 10.0)
        assert link_bias(t, a, b) == pytest.approx(expected, rel=1e-9)
    assert pred_bias(t, 2, 1, 2) == pytest.approx(math.log((2 + EPS) / (3 + 4 * EPS)), rel=1e-12)
    assert pred_bias(t, 1, 1, 2) == pytest.approx(math.log((1 + EPS) / (3 + 4 * EPS)), rel=1e-12)
    assert pred_bias(t, 0, 2, 2) == pytest.approx(math.log((1 + EPS) / (2 + 4 * EPS)), rel=1e-12)
    assert link_bias_table(t)[0, 1] == link_bias(t, 1, 2)
    assert pred_bias_table(t)[1, 1, 3] == pred_bias(t, 3, 2, 2)


def test_link_bias_is_clamped():
    scenes = [_scene([1, 2], [(0, 1, 1)]) for _ in range(50)]
    t = build_freq_table(scenes, 2, 2, 1e-9)
    assert link_bias(t, 1, 2) == 10.0
    assert link_bias(t, 2, 1) == -10.0


def test_nonpositive_eps_rejected():
    with pytest.raises(ValueError):
        build_freq_table([], 2, 2, 0.0)
