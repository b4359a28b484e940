"""The two-stage network: parameters, per-scene forward pass and predictions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import RunConfig
from .encoder import R2EncoderParams, r2_encode
from .evaluate import SceneGraphPrediction
from .freq import FreqTable, link_bias_table, pred_bias_table
from .refiner import DecoderParams, RefinedLabels, argmax_labels, decode_labels, loss_affinity, loss_labels
from .relations import PredicateScores, RelationParams, encode_relations, loss_relations, score_predicates, total_loss
from .scene import FeatureSet, Scene, one_hot_priors, sample_pairs
from .tensor import Tensor

LOSS_NAMES = ("labels", "affinity1", "affinity2", "relations")


@dataclass
class ForwardResult:
    losses: dict[str, Tensor]
    prediction: SceneGraphPrediction
    scores: PredicateScores | None = None
    refined: RefinedLabels | None = None
    affinity1: Tensor | None = None
    affinity2: Tensor | None = None

    @property
    def total(self) -> Tensor:
        return total_loss(*self.losses.values())


@dataclass
class R2Net:
    config: RunConfig
    freq: FreqTable
    encoder1: R2EncoderParams
    decoder: DecoderParams
    relation: RelationParams
    link_table: Tensor = field(init=False)
    pred_table: Tensor = field(init=False)

    def __post_init__(self):
        trainable = self.config.train_freq_bias
        self.link_table = Tensor(link_bias_table(self.freq), requires_grad=trainable)
        self.pred_table = Tensor(pred_bias_table(self.freq), requires_grad=trainable)

    @classmethod
    def init(cls, config: RunConfig, freq: FreqTable, rng: np.random.Generator | int = 0,
             label_embedding: np.ndarray | None = None) -> "R2Net":
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        c = config
        enc1 = R2EncoderParams.init(rng, c.feature_dim, c.hidden1, c.feature_dim, c.layers1, c.gcn1_size, "label")
        ctx = enc1.output_size(c.use_gcn1)
        decoder = DecoderParams.init(rng, c.num_labels, ctx, c.embed1, c.decoder_hidden)
        relation = RelationParams.init(
            rng, c.num_labels, c.num_predicates, ctx, c.feature_dim, c.hidden2, c.layers2, c.embed2,
            c.gcn2_size, c.use_gcn2, label_embedding,
        )
        return cls(config, freq, enc1, decoder, relation)

    def named_parameters(self) -> dict[str, Tensor]:
        params = dict(self.encoder1.named_parameters("enc1."))
        params.update(self.decoder.named_parameters("dec."))
        params.update(self.relation.named_parameters("rel."))
        if self.config.train_freq_bias:
            params["freq.link_bias"] = self.link_table
            params["freq.pred_bias"] = self.pred_table
        return params

    def _link_bias(self, labels: np.ndarray) -> Tensor:
        idx = labels - 1
        return self.link_table[np.ix_(idx, idx)]

    def _pred_bias(self, labels: np.ndarray) -> Tensor:
        idx = labels - 1
        return self.pred_table[np.ix_(idx, idx)]

    def forward(self, scene: Scene, feats: FeatureSet, task: str | None = None, train: bool = False,
                sample_seed=0) -> ForwardResult:
        """Run both stages on one left-to-right ordered scene.

        In training mode the decoder is teacher forced and the enabled loss
        terms are returned; PREDCLS uses one-hot ground-truth priors, skips the
        label loss and feeds the ground-truth labels to stage 2.
        """
        c = self.config
        task = task or c.task
        gt = np.asarray(scene.labels, dtype=np.int64)
        n = scene.num_objects
        if task == "predcls" or feats.prior_label_dist is None:
            prior = one_hot_priors(gt, c.num_labels)
        else:
            prior = np.asarray(feats.prior_label_dist, dtype=np.float64)
        prior_labels = argmax_labels(prior)
        F = Tensor(feats.object_features)
        U = Tensor(feats.union_features)

        losses: dict[str, Tensor] = {}
        if train:
            adj = sample_pairs(scene, "adjacency", (*np.atleast_1d(sample_seed), 0))
            rel = sample_pairs(scene, "relation", (*np.atleast_1d(sample_seed), 1))

        A1, O1 = r2_encode(self.encoder1, F, U, self._link_bias(prior_labels), c.use_bilstm1, c.use_gcn1)
        refined = None
        if c.use_refiner:
            refined = decode_labels(self.decoder, O1, prior, gt if train else None, c.use_prior_labels)
            labels, conf = refined.labels, refined.confidence
            if train and task != "predcls":
                losses["labels"] = loss_labels(refined.logits, gt)
                if c.use_r2_loss:
                    losses["affinity1"] = loss_affinity(A1, adj)
        else:
            labels = prior_labels
            conf = prior[np.arange(n), labels - 1]

        stage2_labels = gt if task == "predcls" else labels
        A2, Z = encode_relations(self.relation, O1, stage2_labels, U, self._link_bias(stage2_labels),
                                 c.use_bilstm2, c.use_gcn2)
        scores = score_predicates(self.relation, Z, U, self._pred_bias(stage2_labels))
        if train:
            if c.use_r2_loss:
                losses["affinity2"] = loss_affinity(A2, adj)
            losses["relations"] = loss_relations(scores, rel)

        prediction = SceneGraphPrediction(labels=np.asarray(labels), label_conf=np.asarray(conf), probs=scores.probs)
        return ForwardResult(losses, prediction, scores, refined, A1, A2)

    def predict(self, scene: Scene, feats: FeatureSet, task: str | None = None) -> SceneGraphPrediction:
        return self.forward(scene, feats, task, train=False).prediction
