"""Context encoder: stacked LSTM, DistMult affinity, symmetrization, GCN."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .hlstm import HighwayLstmParams, glorot, run_stack
from .tensor import DimensionError, Tensor


@dataclass
class R2EncoderParams:
    lstm: HighwayLstmParams
    bypass_W: Tensor  # linear stand-in for the LSTM stack when it is ablated
    bypass_b: Tensor
    subj_W: Tensor  # D_h -> D_f
    subj_b: Tensor
    obj_W: Tensor
    obj_b: Tensor
    w_a: Tensor  # DistMult diagonal, D_f
    W_G: Tensor  # D_h -> D_gcn
    stage: str = "label"

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int, feature_dim: int, num_layers: int,
             gcn_size: int | None = None, stage: str = "label") -> "R2EncoderParams":
        gcn_size = gcn_size or hidden_size
        return cls(
            lstm=HighwayLstmParams.init(rng, input_size, hidden_size, num_layers),
            bypass_W=glorot(rng, input_size, hidden_size),
            bypass_b=T.parameter(np.zeros(hidden_size)),
            subj_W=glorot(rng, hidden_size, feature_dim),
            subj_b=T.parameter(np.zeros(feature_dim)),
            obj_W=glorot(rng, hidden_size, feature_dim),
            obj_b=T.parameter(np.zeros(feature_dim)),
            w_a=T.parameter(np.ones(feature_dim)),
            W_G=glorot(rng, hidden_size, gcn_size),
            stage=stage,
        )

    @property
    def hidden_size(self) -> int:
        return self.bypass_W.shape[1]

    @property
    def gcn_size(self) -> int:
        return self.W_G.shape[1]

    def output_size(self, use_gcn: bool = True) -> int:
        return self.gcn_size + self.hidden_size if use_gcn else self.hidden_size

    def named_parameters(self, prefix: str = ""):
        yield from self.lstm.named_parameters(f"{prefix}lstm.")
        for name in ("bypass_W", "bypass_b", "subj_W", "subj_b", "obj_W", "obj_b", "w_a", "W_G"):
            yield f"{prefix}{name}", getattr(self, name)


def pair_distmult(subj: Tensor, obj: Tensor, U: Tensor) -> Tensor:
    """N x N x D tensor of (s_i * u_ij) * (o_j * u_ij)."""
    n, d = subj.shape
    if U.shape != (n, n, d) or obj.shape != (n, d):
        raise DimensionError(f"distmult: subj {subj.shape}, obj {obj.shape}, union {U.shape}")
    return (T.reshape(subj, (n, 1, d)) * U) * (T.reshape(obj, (1, n, d)) * U)


def affinity(params: R2EncoderParams, H: Tensor, U, bias=None) -> Tensor:
    """a_ij = sigmoid(sum_d w_d (hs_i u_ij)_d (ho_j u_ij)_d + bias_ij)."""
    U = T.as_tensor(U)
    hs = H @ params.subj_W + params.subj_b
    ho = H @ params.obj_W + params.obj_b
    score = T.tsum(pair_distmult(hs, ho, U) * params.w_a, axis=-1)
    if bias is not None:
        score = score + bias
    return T.sigmoid(score)


def symmetrize(A) -> Tensor:
    """max(a_ij, a_ji) off the diagonal, exactly 1 on it."""
    A = T.as_tensor(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"symmetrize: not square {A.shape}")
    eye = np.eye(n)
    return T.maximum(A, T.transpose(A)) * (1.0 - eye) + eye


def normalize_rows(A_s: Tensor) -> Tensor:
    """D^s A^s with d_ii = 1 / sum_k a_ik."""
    deg = T.tsum(A_s, axis=1, keepdims=True)
    # NaN rows pass through so the training loop can report them as non-finite
    assert not np.any(deg.data <= 0), "symmetrized affinity has a zero row"
    return A_s / deg


def gcn(A_s, H: Tensor, W_G: Tensor) -> Tensor:
    return T.relu(normalize_rows(T.as_tensor(A_s)) @ H @ W_G)


def r2_encode(params: R2EncoderParams, F_in: Tensor, U, bias=None, use_bilstm: bool = True,
              use_gcn: bool = True) -> tuple[Tensor, Tensor]:
    """Returns the raw affinity and O' = [gcn output, H] (or H alone without the GCN)."""
    F_in = T.as_tensor(F_in)
    if use_bilstm:
        H = run_stack(params.lstm, F_in)
    else:
        H = F_in @ params.bypass_W + params.bypass_b
    A_raw = affinity(params, H, U, bias)
    if not use_gcn:
        return A_raw, H
    O = gcn(symmetrize(A_raw), H, params.W_G)
    return A_raw, T.concat([O, H], axis=-1)
