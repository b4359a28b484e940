"""Stage 1 label decoder and its losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .hlstm import HighwayLstmLayer, glorot, hlstm_cell, run_layer
from .scene import PairSample
from .tensor import Tensor

BOS = 0  # row 0 of the embedding table; label c uses row c
PROB_CLAMP = 1e-7


@dataclass
class DecoderParams:
    embed: Tensor  # (D_l + 1) x D_emb
    cell: HighwayLstmLayer  # single left-to-right layer over [embed(prev), o'_i]
    W_out: Tensor  # D_dec x D_l

    @classmethod
    def init(cls, rng, num_labels: int, context_size: int, embed_size: int = 16,
             hidden_size: int = 32) -> "DecoderParams":
        return cls(
            embed=T.parameter(rng.normal(0.0, 0.1, size=(num_labels + 1, embed_size))),
            cell=HighwayLstmLayer.init(rng, embed_size + context_size, hidden_size),
            W_out=glorot(rng, hidden_size, num_labels),
        )

    @property
    def num_labels(self) -> int:
        return self.W_out.shape[1]

    def named_parameters(self, prefix: str = ""):
        yield f"{prefix}embed", self.embed
        yield from self.cell.named_parameters(f"{prefix}cell.")
        yield f"{prefix}W_out", self.W_out


@dataclass
class RefinedLabels:
    logits: Tensor  # N x D_l
    labels: np.ndarray  # 1-based ids

    @property
    def confidence(self) -> np.ndarray:
        """Softmax probability of each chosen label."""
        z = self.logits.data - self.logits.data.max(axis=1, keepdims=True)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        return p[np.arange(len(self.labels)), self.labels - 1]


def argmax_labels(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the smallest id on ties
    return np.argmax(logits, axis=1).astype(np.int64) + 1


def decode_labels(params: DecoderParams, O_prime: Tensor, prior, gt_labels=None,
                  use_prior: bool = True) -> RefinedLabels:
    """Sequential decoding with logits_i = W q_i + prior_i.

    With ``gt_labels`` the previous-label input is teacher forced; otherwise the
    previous argmax is fed back.
    """
    prior = np.asarray(prior, dtype=np.float64)
    n = O_prime.shape[0]
    if gt_labels is not None:
        prev = np.concatenate([[BOS], np.asarray(gt_labels, dtype=np.int64)[:-1]])
        x = T.concat([params.embed[prev], O_prime], axis=-1)
        Q = run_layer(params.cell, x, delta=-1)
        logits = Q @ params.W_out
        if use_prior:
            logits = logits + prior
        return RefinedLabels(logits, argmax_labels(logits.data))

    d = params.cell.hidden_size
    h = Tensor(np.zeros((1, d)))
    c = Tensor(np.zeros((1, d)))
    prev = BOS
    rows, labels = [], []
    for i in range(n):
        x = T.concat([params.embed[prev : prev + 1], O_prime[i : i + 1]], axis=-1)
        h, c = hlstm_cell(params.cell, 1, x, h, c)
        row = h @ params.W_out
        if use_prior:
            row = row + prior[i : i + 1]
        rows.append(row)
        prev = int(argmax_labels(row.data)[0])
        labels.append(prev)
    if not rows:
        return RefinedLabels(Tensor(np.zeros((0, params.num_labels))), np.zeros(0, dtype=np.int64))
    return RefinedLabels(T.concat(rows, axis=0), np.array(labels, dtype=np.int64))


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-softmax at the target columns (0-based)."""
    targets = np.asarray(targets, dtype=np.int64)
    logp = T.log_softmax(logits)
    return -T.mean(logp[np.arange(len(targets)), targets])


def loss_labels(logits: Tensor, gt_labels) -> Tensor:
    return cross_entropy(logits, np.asarray(gt_labels, dtype=np.int64) - 1)


def loss_affinity(A: Tensor, sample: PairSample) -> Tensor:
    """Mean binary cross-entropy over the sampled pairs (probabilities clamped)."""
    if sample.kind != "adjacency":
        raise ValueError("affinity loss needs an adjacency sample")
    if not sample.pairs:
        return Tensor(0.0)
    idx = np.array(sample.pairs, dtype=np.int64)
    t = idx[:, 2].astype(np.float64)
    a = T.clip(A[idx[:, 0], idx[:, 1]], PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = t * T.log(a) + (1.0 - t) * T.log(1.0 - a)
    return -T.mean(ll)
