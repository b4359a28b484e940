"""Triple ranking, Recall@K, per-predicate recall and object accuracy."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_KS = (20, 50, 100)


@dataclass(frozen=True)
class ScoredTriple:
    subj: int
    obj: int
    predicate: int
    score: float


@dataclass
class SceneGraphPrediction:
    """Refined labels plus the (D_r + 1) x N x N predicate distribution for one scene."""

    labels: np.ndarray  # 1-based
    label_conf: np.ndarray
    probs: np.ndarray


def rank_triples(probs: np.ndarray, label_conf: np.ndarray | None = None, constrained: bool = True) -> list[ScoredTriple]:
    """Candidate triples sorted by descending score; ties by (subj, obj, predicate).

    With ``label_conf`` (SGCLS) the score is multiplied by both objects' label
    confidences.  Background (0) is never ranked.
    """
    m, n, _ = probs.shape
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            pair = probs[1:, i, j]
            factor = 1.0 if label_conf is None else float(label_conf[i] * label_conf[j])
            if constrained:
                best = int(np.argmax(pair))
                out.append(ScoredTriple(i, j, best + 1, float(pair[best]) * factor))
            else:
                out.extend(ScoredTriple(i, j, p + 1, float(pair[p]) * factor) for p in range(m - 1))
    out.sort(key=lambda t: (-t.score, t.subj, t.obj, t.predicate))
    return out


def _hits(top: Sequence[ScoredTriple], gt: Iterable[tuple[int, int, int]], pred_labels=None, gt_labels=None):
    keys = {(t.subj, t.obj, t.predicate) for t in top}
    hits = []
    for s, o, p in gt:
        ok = (s, o, p) in keys
        if ok and pred_labels is not None:
            ok = pred_labels[s] == gt_labels[s] and pred_labels[o] == gt_labels[o]
        hits.append(ok)
    return hits


def recall_at_k(ranked: Sequence[ScoredTriple], gt_relations, k: int, pred_labels=None, gt_labels=None) -> float:
    """|top-K intersect GT| / |GT|; an empty GT set is defined as 1.0 (see ``is_degenerate``).

    Pass predicted and ground-truth labels to require label agreement (SGCLS).
    """
    if k <= 0:
        raise ValueError("K must be positive")
    gt = list(gt_relations)
    if not gt:
        return 1.0
    return sum(_hits(ranked[:k], gt, pred_labels, gt_labels)) / len(gt)


def is_degenerate(gt_relations) -> bool:
    return len(gt_relations) == 0


def per_predicate_recall(rankings: Sequence[Sequence[ScoredTriple]], gts: Sequence, k: int = 100,
                         pred_labels=None, gt_labels=None) -> dict[int, float]:
    """Recall restricted to each predicate's GT triples, averaged over scenes that contain it."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for idx, (ranked, gt) in enumerate(zip(rankings, gts)):
        pl = None if pred_labels is None else pred_labels[idx]
        gl = None if gt_labels is None else gt_labels[idx]
        for p in sorted({r[2] for r in gt}):
            sub = [r for r in gt if r[2] == p]
            sums[p] = sums.get(p, 0.0) + recall_at_k(ranked, sub, k, pl, gl)
            counts[p] = counts.get(p, 0) + 1
    return {p: sums[p] / counts[p] for p in sorted(sums)}


def object_accuracy(pred_labels, gt_labels) -> float:
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise ValueError("label arrays differ in length")
    if gt.size == 0:
        return 1.0
    return float(np.mean(pred == gt))


@dataclass
class EvalReport:
    task: str
    recall: dict[tuple[int, bool], float] = field(default_factory=dict)
    per_predicate_recall: dict[int, float] = field(default_factory=dict)
    object_accuracy: float = 1.0
    num_scenes: int = 0
    degenerate_scenes: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"{self.task} R@{k} constrained={str(c).lower()} {v:.6f}" for (k, c), v in sorted(self.recall.items())]
        out.append(f"{self.task} obj_acc {self.object_accuracy:.6f}")
        out.extend(f"{self.task} predicate={p} R@100 unconstrained {v:.6f}" for p, v in self.per_predicate_recall.items())
        if self.degenerate_scenes:
            out.append(f"{self.task} degenerate_scenes {len(self.degenerate_scenes)}")
        return out

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "recall": [{"k": k, "constrained": c, "value": v} for (k, c), v in sorted(self.recall.items())],
            "per_predicate_recall": {str(p): v for p, v in self.per_predicate_recall.items()},
            "object_accuracy": self.object_accuracy,
            "num_scenes": self.num_scenes,
            "degenerate_scenes": list(self.degenerate_scenes),
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate_predictions(scenes, predictions: Sequence[SceneGraphPrediction], task: str,
                         ks: Sequence[int] = DEFAULT_KS, modes: Sequence[bool] = (True, False)) -> EvalReport:
    """Macro-average recall over scenes with at least one GT triple.

    Scenes without GT triples are listed in ``degenerate_scenes`` and left out
    of the averages.  Object accuracy pools all objects.
    """
    sgcls = task == "sgcls"
    report = EvalReport(task=task, num_scenes=len(scenes))
    sums = {(k, c): 0.0 for k in ks for c in modes}
    counted = 0
    unconstrained_rankings, gts, pls, gls = [], [], [], []
    correct = total = 0
    for scene, pred in zip(scenes, predictions):
        gt = [tuple(r) for r in scene.relations]
        gt_labels = np.asarray(scene.labels)
        correct += int(np.sum(pred.labels == gt_labels))
        total += len(gt_labels)
        conf = pred.label_conf if sgcls else None
        pl, gl = (pred.labels, gt_labels) if sgcls else (None, None)
        ranked = {c: rank_triples(pred.probs, conf, constrained=c) for c in set(modes) | {False}}
        unconstrained_rankings.append(ranked[False])
        gts.append(gt)
        pls.append(pl)
        gls.append(gl)
        if is_degenerate(gt):
            report.degenerate_scenes.append(scene.scene_id)
            continue
        counted += 1
        for k in ks:
            for c in modes:
                sums[(k, c)] += recall_at_k(ranked[c], gt, k, pl, gl)
    report.recall = {key: (v / counted if counted else 1.0) for key, v in sums.items()}
    report.per_predicate_recall = per_predicate_recall(
        unconstrained_rankings, gts, 100, pls if sgcls else None, gls if sgcls else None
    )
    report.object_accuracy = correct / total if total else 1.0
    return report
