"""Stacked LSTM layers with highway gates and alternating direction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor

GATES = ("i", "o", "f", "r", "g")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return T.parameter(rng.uniform(-a, a, size=shape or (fan_in, fan_out)))


@dataclass
class HighwayLstmLayer:
    """One layer: gate weights act on ``[h_prev, x]`` (rows: hidden block first)."""

    W_i: Tensor
    W_o: Tensor
    W_f: Tensor
    W_r: Tensor
    W_g: Tensor
    b_i: Tensor
    b_o: Tensor
    b_f: Tensor
    b_r: Tensor
    b_g: Tensor
    W_h: Tensor  # highway projection of the layer input, D_in x D_h

    @property
    def input_size(self) -> int:
        return self.W_h.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.W_h.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden_size: int) -> "HighwayLstmLayer":
        ws = {f"W_{g}": glorot(rng, hidden_size + input_size, hidden_size) for g in GATES}
        bs = {f"b_{g}": T.parameter(np.zeros(hidden_size)) for g in GATES}
        return cls(**ws, **bs, W_h=glorot(rng, input_size, hidden_size))

    def named_parameters(self, prefix: str = ""):
        for g in GATES:
            yield f"{prefix}W_{g}", getattr(self, f"W_{g}")
        for g in GATES:
            yield f"{prefix}b_{g}", getattr(self, f"b_{g}")
        yield f"{prefix}W_h", self.W_h


@dataclass
class HighwayLstmParams:
    layers: list[HighwayLstmLayer]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def hidden_size(self) -> int:
        return self.layers[-1].hidden_size

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int, num_layers: int) -> "HighwayLstmParams":
        layers = []
        for k in range(num_layers):
            layers.append(HighwayLstmLayer.init(rng, input_size if k == 0 else hidden_size, hidden_size))
        return cls(layers)

    def named_parameters(self, prefix: str = ""):
        for k, layer in enumerate(self.layers, start=1):
            yield from layer.named_parameters(f"{prefix}layer{k}.")


def direction(k: int) -> int:
    """delta_k for the 1-based layer number k: +1 for even k, -1 for odd k.

    The recurrent state at step t comes from step t + delta_k, so delta = -1
    scans left-to-right and delta = +1 scans right-to-left.
    """
    return 1 if k % 2 == 0 else -1


def hlstm_cell(params: HighwayLstmParams | HighwayLstmLayer, k: int, x_t: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One step of layer k (1-based); all vectors are 1 x D rows."""
    layer = params if isinstance(params, HighwayLstmLayer) else params.layers[k - 1]
    if x_t.shape != (1, layer.input_size) or h_prev.shape != (1, layer.hidden_size):
        raise DimensionError(
            f"hlstm_cell: x {x_t.shape}, h {h_prev.shape} vs layer ({layer.input_size}, {layer.hidden_size})"
        )
    hx = T.concat([h_prev, x_t], axis=-1)
    i = T.sigmoid(hx @ layer.W_i + layer.b_i)
    o = T.sigmoid(hx @ layer.W_o + layer.b_o)
    f = T.sigmoid(hx @ layer.W_f + layer.b_f)
    r = T.sigmoid(hx @ layer.W_r + layer.b_r)
    g = T.tanh(hx @ layer.W_g + layer.b_g)
    c = f * c_prev + i * g
    h_lstm = o * T.tanh(c)
    h = r * h_lstm + (1.0 - r) * (x_t @ layer.W_h)
    return h, c


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def highway_scan(pre_x: Tensor, highway: Tensor, W_hh: Tensor, delta: int) -> Tensor:
    """Recurrent part of one layer as a single recorded op.

    pre_x: N x 5D input contributions to the (i, o, f, r, g) pre-activations
    (bias included); highway: N x D projected inputs; W_hh: D x 5D recurrent
    weights.  The backward pass is hand-written BPTT.
    """
    n, d = highway.shape
    order = list(range(n)) if delta == -1 else list(range(n - 1, -1, -1))
    px, hw, Whh = pre_x.data, highway.data, W_hh.data
    H = np.zeros((n, d))
    C = np.zeros((n, d))
    acts = np.zeros((n, 5 * d))
    h = np.zeros(d)
    c = np.zeros(d)
    prev_h = np.zeros((n, d))
    prev_c = np.zeros((n, d))
    for t in order:
        prev_h[t], prev_c[t] = h, c
        pre = h @ Whh + px[t]
        a = np.empty(5 * d)
        a[: 4 * d] = _sigmoid(pre[: 4 * d])
        a[4 * d :] = np.tanh(pre[4 * d :])
        i, o, f, r, g = a[:d], a[d : 2 * d], a[2 * d : 3 * d], a[3 * d : 4 * d], a[4 * d :]
        c = f * c + i * g
        h = r * (o * np.tanh(c)) + (1.0 - r) * hw[t]
        acts[t], C[t], H[t] = a, c, h

    def bw(dH):
        d_px = np.zeros_like(px)
        d_hw = np.zeros_like(hw)
        dh_next = np.zeros(d)
        dc_next = np.zeros(d)
        for t in reversed(order):
            a = acts[t]
            i, o, f, r, g = a[:d], a[d : 2 * d], a[2 * d : 3 * d], a[3 * d : 4 * d], a[4 * d :]
            tc = np.tanh(C[t])
            h_lstm = o * tc
            dh = dH[t] + dh_next
            d_hw[t] = dh * (1.0 - r)
            dr = dh * (h_lstm - hw[t])
            dhl = dh * r
            do = dhl * tc
            dc = dhl * o * (1.0 - tc * tc) + dc_next
            dpre = np.concatenate([
                dc * g * i * (1.0 - i),
                do * o * (1.0 - o),
                dc * prev_c[t] * f * (1.0 - f),
                dr * r * (1.0 - r),
                dc * i * (1.0 - g * g),
            ])
            d_px[t] = dpre
            dh_next = Whh @ dpre
            dc_next = dc * f
        return d_px, d_hw, prev_h.T @ d_px

    return T._make(H, (pre_x, highway, W_hh), bw)


def run_layer(layer: HighwayLstmLayer, X: Tensor, delta: int) -> Tensor:
    """Run one layer over an N x D_in sequence; returns N x D_h.

    Same arithmetic as repeated ``hlstm_cell`` calls, with the input halves of
    the gate products and the highway projection computed for all steps at once.
    """
    d = layer.hidden_size
    if X.ndim != 2 or X.shape[1] != layer.input_size:
        raise DimensionError(f"run_layer: input shape {X.shape} vs input size {layer.input_size}")
    W_all = T.concat([layer.W_i, layer.W_o, layer.W_f, layer.W_r, layer.W_g], axis=-1)
    b_all = T.concat([layer.b_i, layer.b_o, layer.b_f, layer.b_r, layer.b_g], axis=-1)
    pre_x = X @ W_all[d:] + b_all
    return highway_scan(pre_x, X @ layer.W_h, W_all[:d], delta)


def run_stack(params: HighwayLstmParams, inputs: Tensor, directions=None) -> Tensor:
    """Top-layer states for inputs already sorted left-to-right.

    ``directions`` overrides delta_k per layer (used to check the reversal symmetry).
    """
    n = inputs.shape[0]
    if n == 0:
        return Tensor(np.zeros((0, params.hidden_size)))
    x = inputs
    for k, layer in enumerate(params.layers, start=1):
        delta = direction(k) if directions is None else directions[k - 1]
        x = run_layer(layer, x, delta)
    return x
