import numpy as np
import pytest

from r2net import tensor as T
from r2net.hlstm import HighwayLstmLayer, HighwayLstmParams, direction, hlstm_cell, run_layer, run_stack
from r2net.tensor import DimensionError, Tensor

from _oracles import check_grads, sigmoid


def _zero_layer(d_in, d_h):
    layer = HighwayLstmLayer.init(np.random.default_rng(0), d_in, d_h)
    for _, p in layer.named_parameters():
        p.data[...] = 0.0
    return layer


def _np_cell(layer, x, h, c):
    """Plain numpy version of one step, written out gate by gate."""
    hx = np.concatenate([h, x])
    gate = lambda n: hx @ getattr(layer, f"W_{n}").data + getattr(layer, f"b_{n}").data
    i, o, f, r = (sigmoid(gate(n)) for n in "iofr")
    g = np.tanh(gate("g"))
    c_new = f * c + i * g
    h_new = r * (o * np.tanh(c_new)) + (1 - r) * (x @ layer.W_h.data)
    return h_new, c_new


def _np_layer(layer, X, delta):
    n = X.shape[0]
    d = layer.hidden_size
    out = np.zeros((n, d))
    h, c = np.zeros(d), np.zeros(d)
    for t in (range(n) if delta == -1 else range(n - 1, -1, -1)):
        h, c = _np_cell(layer, X[t], h, c)
        out[t] = h
    return out


def test_directions_alternate():
    assert [direction(k) for k in range(1, 5)] == [-1, 1, -1, 1]


def test_zero_weights_closed_form():
    layer = _zero_layer(3, 2)
    c_prev = np.array([[0.4, -1.2]])
    h, c = hlstm_cell(layer, 1, Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 2))), Tensor(c_prev))
    np.testing.assert_allclose(c.data, 0.5 * c_prev, rtol=0, atol=1e-15)
    np.testing.assert_allclose(h.data, 0.5 * (0.5 * np.tanh(0.5 * c_prev)), rtol=0, atol=1e-15)


def test_saturated_r_gate_gives_pure_lstm_path():
    rng = np.random.default_rng(1)
    layer = HighwayLstmLayer.init(rng, 3, 4)
    layer.b_r.data[...] = 60.0
    x, hp, cp = rng.normal(size=(1, 3)), rng.normal(size=(1, 4)), rng.normal(size=(1, 4))
    h, c = hlstm_cell(layer, 1, Tensor(x), Tensor(hp), Tensor(cp))
    hx = np.concatenate([hp[0], x[0]])
    o = sigmoid(hx @ layer.W_o.data)
    np.testing.assert_allclose(h.data[0], o * np.tanh(c.data[0]), rtol=1e-12)


def test_cell_matches_numpy_oracle():
    rng = np.random.default_rng(2)
    layer = HighwayLstmLayer.init(rng, 5, 3)
    for _, p in layer.named_parameters():
        p.data[...] = rng.normal(size=p.shape)
    x, hp, cp = rng.normal(size=5), rng.normal(size=3), rng.normal(size=3)
    h, c = hlstm_cell(layer, 1, Tensor(x[None]), Tensor(hp[None]), Tensor(cp[None]))
    h_ref, c_ref = _np_cell(layer, x, hp, cp)
    np.testing.assert_allclose(h.data[0], h_ref, rtol=0, atol=1e-12)
    np.testing.assert_allclose(c.data[0], c_ref, rtol=0, atol=1e-12)


def test_cell_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    params = HighwayLstmParams.init(rng, 4, 3, 1)
    layer = params.layers[0]
    for _, p in layer.named_parameters():
        p.data[...] = rng.normal(scale=0.7, size=p.shape)
    x = T.parameter(rng.normal(size=(1, 4)))
    hp = T.parameter(rng.normal(size=(1, 3)))
    cp = T.parameter(rng.normal(size=(1, 3)))
    named = dict(layer.named_parameters())
    named.update(x=x, hp=hp, cp=cp)
    errs = check_grads(lambda: hlstm_cell(params, 1, x, hp, cp)[0].sum(), named)
    assert max(errs.values()) < 1e-7, errs


def test_cell_rejects_bad_shapes():
    layer = _zero_layer(3, 2)
    with pytest.raises(DimensionError):
        hlstm_cell(layer, 1, Tensor(np.ones((1, 4))), Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 2))))


@pytest.mark.parametrize("delta", [-1, 1])
@pytest.mark.parametrize("n", [1, 2, 5])
def test_layer_equals_repeated_cell(delta, n):
    rng = np.random.default_rng(n)
    layer = HighwayLstmLayer.init(rng, 4, 3)
    for _, p in layer.named_parameters():
        p.data[...] = rng.normal(scale=0.8, size=p.shape)
    X = rng.normal(size=(n, 4))
    np.testing.assert_allclose(run_layer(layer, Tensor(X), delta).data, _np_layer(layer, X, delta),
                               rtol=0, atol=1e-12)


def test_single_object_is_one_cell_per_layer():
    rng = np.random.default_rng(5)
    params = HighwayLstmParams.init(rng, 4, 3, 3)
    x = rng.normal(size=(1, 4))
    h = x[0]
    for layer in params.layers:
        h, _ = _np_cell(layer, h, np.zeros(3), np.zeros(3))
    for dirs in (None, [1, 1, 1], [-1, -1, -1]):
        np.testing.assert_allclose(run_stack(params, Tensor(x), dirs).data[0], h, rtol=0, atol=1e-12)


def test_reversal_symmetry():
    rng = np.random.default_rng(6)
    params = HighwayLstmParams.init(rng, 4, 3, 4)
    X = rng.normal(size=(6, 4))
    forward = run_stack(params, Tensor(X)).data
    flipped = [-direction(k) for k in range(1, 5)]
    backward = run_stack(params, Tensor(X[::-1].copy()), flipped).data
    np.testing.assert_allclose(backward[::-1], forward, rtol=0, atol=1e-12)


def test_two_zero_layers_compose_cells():
    params = HighwayLstmParams([_zero_layer(3, 3), _zero_layer(3, 3)])
    X = np.random.default_rng(7).normal(size=(4, 3))
    out = run_stack(params, Tensor(X)).data
    ref = _np_layer(params.layers[1], _np_layer(params.layers[0], X, -1), 1)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-15)
    # zero weights: c follows c_t = 0.5 c_prev + 0 so everything stays at zero
    assert np.all(out == 0.0)


def test_empty_sequence():
    params = HighwayLstmParams.init(np.random.default_rng(0), 4, 3, 2)
    assert run_stack(params, Tensor(np.zeros((0, 4)))).shape == (0, 3)


@pytest.mark.parametrize("delta", [-1, 1])
def test_fused_layer_gradients_match_finite_differences(delta):
    rng = np.random.default_rng(8)
    layer = HighwayLstmLayer.init(rng, 3, 4)
    for _, p in layer.named_parameters():
        p.data[...] = rng.normal(scale=0.7, size=p.shape)
    X = T.parameter(rng.normal(size=(4, 3)))
    weights = Tensor(rng.normal(size=(4, 4)))
    named = dict(layer.named_parameters())
    named["X"] = X
    errs = check_grads(lambda: (run_layer(layer, X, delta) * weights).sum(), named)
    assert max(errs.values()) < 1e-7, errs


def test_stack_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    params = HighwayLstmParams.init(rng, 3, 3, 3)
    X = T.parameter(rng.normal(size=(3, 3)))
    named = dict(params.named_parameters())
    named["X"] = X
    errs = check_grads(lambda: run_stack(params, X).sum(), named)
    assert max(errs.values()) < 1e-7, errs
