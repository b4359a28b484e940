"""Stage 2: relation encoder, per-predicate DistMult scoring and losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import R2EncoderParams, pair_distmult, r2_encode
from .hlstm import glorot
from .scene import PairSample
from .tensor import Tensor


@dataclass
class RelationParams:
    label_embed: Tensor  # W^L, D_l x D_emb2
    encoder: R2EncoderParams
    subj_W: Tensor  # D_z -> D_f
    subj_b: Tensor
    obj_W: Tensor
    obj_b: Tensor
    w_r: Tensor  # (D_r + 1) x D_f, one DistMult diagonal per predicate incl. background

    @classmethod
    def init(cls, rng, num_labels: int, num_predicates: int, context_size: int, feature_dim: int,
             hidden_size: int = 32, num_layers: int = 4, embed_size: int = 16, gcn_size: int | None = None,
             use_gcn: bool = True, embedding: np.ndarray | None = None) -> "RelationParams":
        enc = R2EncoderParams.init(rng, context_size + embed_size, hidden_size, feature_dim, num_layers,
                                   gcn_size, stage="relation")
        z = enc.output_size(use_gcn)
        if embedding is None:
            label_embed = glorot(rng, num_labels, embed_size)
        else:
            label_embed = T.parameter(np.asarray(embedding, dtype=np.float64).reshape(num_labels, embed_size))
        return cls(
            label_embed=label_embed,
            encoder=enc,
            subj_W=glorot(rng, z, feature_dim),
            subj_b=T.parameter(np.zeros(feature_dim)),
            obj_W=glorot(rng, z, feature_dim),
            obj_b=T.parameter(np.zeros(feature_dim)),
            w_r=glorot(rng, num_predicates + 1, feature_dim),
        )

    def named_parameters(self, prefix: str = ""):
        yield f"{prefix}label_embed", self.label_embed
        yield from self.encoder.named_parameters(f"{prefix}encoder.")
        for name in ("subj_W", "subj_b", "obj_W", "obj_b", "w_r"):
            yield f"{prefix}{name}", getattr(self, name)


@dataclass
class PredicateScores:
    raw: Tensor  # (D_r + 1) x N x N logits
    log_probs: Tensor

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


def encode_relations(params: RelationParams, O_prime: Tensor, labels, U, link_bias=None,
                     use_bilstm: bool = True, use_gcn: bool = True) -> tuple[Tensor, Tensor]:
    """R2-encode [O', W^L L^d]; returns (A^r, Z)."""
    idx = np.asarray(labels, dtype=np.int64) - 1
    x = T.concat([O_prime, params.label_embed[idx]], axis=-1)
    return r2_encode(params.encoder, x, U, link_bias, use_bilstm, use_gcn)


def score_predicates(params: RelationParams, Z: Tensor, U, pred_bias=None) -> PredicateScores:
    """r'_mij = sum_d w^r_md (zs_i u_ij)_d (zo_j u_ij)_d + bias_mij, softmax over m.

    ``pred_bias`` is N x N x (D_r + 1).
    """
    U = T.as_tensor(U)
    n = Z.shape[0]
    zs = Z @ params.subj_W + params.subj_b
    zo = Z @ params.obj_W + params.obj_b
    P = pair_distmult(zs, zo, U)
    d = P.shape[-1]
    raw = T.reshape(T.reshape(P, (n * n, d)) @ T.transpose(params.w_r), (n, n, -1))
    if pred_bias is not None:
        raw = raw + pred_bias
    logp = T.log_softmax(raw)
    return PredicateScores(T.transpose(raw, (2, 0, 1)), T.transpose(logp, (2, 0, 1)))


def loss_relations(scores: PredicateScores, sample: PairSample) -> Tensor:
    """Mean cross-entropy of the predicate distribution at each sampled pair."""
    if sample.kind != "relation":
        raise ValueError("relation loss needs a relation sample")
    if not sample.pairs:
        return Tensor(0.0)
    idx = np.array(sample.pairs, dtype=np.int64)
    return -T.mean(scores.log_probs[idx[:, 2], idx[:, 0], idx[:, 1]])


def total_loss(*terms) -> Tensor:
    """Unweighted sum of the enabled loss terms (None entries are skipped)."""
    out = Tensor(0.0)
    for t in terms:
        if t is not None:
            out = out + t
    return out
