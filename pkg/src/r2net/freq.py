"""Label-pair frequency statistics and the bias terms derived from them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import Scene

LINK_BIAS_CLAMP = 10.0


@dataclass
class FreqTable:
    pair_link_prob: np.ndarray  # D_l x D_l, P(related | subject label, object label)
    pair_pred_prob: np.ndarray  # D_l x D_l x (D_r + 1), background at index 0
    empty: bool = False  # built from a corpus without any object pairs

    @property
    def num_labels(self) -> int:
        return self.pair_link_prob.shape[0]

    @property
    def num_classes(self) -> int:
        return self.pair_pred_prob.shape[2]


def build_freq_table(train_scenes: Sequence[Scene], num_labels: int, num_predicates: int,
                     eps: float = 1e-3) -> FreqTable:
    """Count every ordered object pair; unrelated pairs count as background.

    Probabilities are (count + eps) / (total + eps * classes).
    """
    if eps <= 0:
        raise ValueError("smoothing eps must be positive")
    m = num_predicates + 1
    counts = np.zeros((num_labels, num_labels, m))
    for scene in train_scenes:
        R = scene.predicate_matrix()
        lab = np.asarray(scene.labels, dtype=np.int64) - 1
        n = scene.num_objects
        for i in range(n):
            for j in range(n):
                if i != j:
                    counts[lab[i], lab[j], R[i, j]] += 1
    total = counts.sum(axis=2)
    related = total - counts[:, :, 0]
    link = (related + eps) / (total + 2 * eps)
    pred = (counts + eps) / (total[:, :, None] + eps * m)
    return FreqTable(link, pred, empty=bool(total.sum() == 0))


def _logit(p):
    return np.clip(np.log(p) - np.log1p(-p), -LINK_BIAS_CLAMP, LINK_BIAS_CLAMP)


def link_bias(table: FreqTable, li: int, lj: int) -> float:
    """logit of P(related | li, lj), clamped to [-10, 10]; labels are 1-based."""
    return float(_logit(table.pair_link_prob[li - 1, lj - 1]))


def pred_bias(table: FreqTable, m: int, li: int, lj: int) -> float:
    return float(np.log(table.pair_pred_prob[li - 1, lj - 1, m]))


def link_bias_table(table: FreqTable) -> np.ndarray:
    return _logit(table.pair_link_prob)


def pred_bias_table(table: FreqTable) -> np.ndarray:
    return np.log(table.pair_pred_prob)
