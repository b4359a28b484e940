"""Training loop and model evaluation over example lists."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import Example
from .evaluate import DEFAULT_KS, EvalReport, evaluate_predictions
from .freq import build_freq_table
from .model import R2Net

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: R2Net
    losses: list[float] = field(default_factory=list)
    val_recall: list[float] = field(default_factory=list)
    best_epoch: int = 0
    checkpoint: Checkpoint | None = None


def evaluate_model(model: R2Net, examples: Sequence[Example], task: str | None = None,
                   ks: Sequence[int] = DEFAULT_KS, modes: Sequence[bool] = (True, False)) -> EvalReport:
    task = task or model.config.task
    with T.no_grad():
        preds = [model.predict(ex.scene, ex.feats, task) for ex in examples]
    return evaluate_predictions([ex.scene for ex in examples], preds, task, ks, modes)


def _check_finite(result, params) -> None:
    for name, value in result.items():
        if not np.all(np.isfinite(value.data)):
            raise NumericalError(f"non-finite loss term {name!r}")
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient in {name!r}")


def train(config: RunConfig, train_examples: Sequence[Example], val_examples: Sequence[Example] = (),
          out_ckpt=None, callback: Callable[[int, R2Net, TrainResult], bool] | None = None) -> TrainResult:
    """SGD with momentum over shuffled mini-batches of scenes.

    The batch loss is the mean of the per-scene summed losses.  The checkpoint
    with the best validation R@20 (graph constrained) is kept; without a
    validation split the last epoch wins.  ``callback`` may return True to stop.
    """
    rng = np.random.default_rng(config.seed)
    freq = build_freq_table([ex.scene for ex in train_examples], config.num_labels, config.num_predicates,
                            config.freq_eps)
    model = R2Net.init(config, freq, rng)
    params = model.named_parameters()
    opt = T.OptimizerState.create(params, config.lr, config.momentum)
    T.zero_grad(params)
    result = TrainResult(model, checkpoint=Checkpoint.from_model(model, 0, rng.bit_generator.state))
    best = -1.0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_examples))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            batch_loss = None
            for idx in batch:
                ex = train_examples[idx]
                out = model.forward(ex.scene, ex.feats, config.task, train=True,
                                    sample_seed=(config.seed, epoch, int(idx)))
                _check_finite(out.losses, {})
                scene_loss = out.total
                total += scene_loss.item()
                count += 1
                batch_loss = scene_loss if batch_loss is None else batch_loss + scene_loss
            batch_loss = batch_loss * (1.0 / len(batch))
            T.backward(batch_loss)
            _check_finite({}, params)
            T.sgd_step(params, opt)
        result.losses.append(total / max(count, 1))

        if val_examples:
            r20 = evaluate_model(model, val_examples, ks=(20,), modes=(True,)).recall[(20, True)]
        else:
            r20 = float("nan")
        result.val_recall.append(r20)
        log.info("epoch %d loss %.6f val R@20 %.4f", epoch, result.losses[-1], r20)
        if not val_examples or r20 > best:
            best = r20 if val_examples else best
            result.best_epoch = epoch
            result.checkpoint = Checkpoint.from_model(model, epoch, rng.bit_generator.state)
        if callback is not None and callback(epoch, model, result):
            break

    if out_ckpt is not None:
        save_checkpoint(out_ckpt, result.checkpoint)
    return result
