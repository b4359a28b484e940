"""Ablation variants and a small driver that trains and scores each of them."""
from __future__ import annotations

from typing import Sequence

from .config import RunConfig
from .dataset import generate_splits, make_examples
from .train import evaluate_model, train

VARIANTS = {
    "all": {},
    "no_refiner": {"use_refiner": False},
    "no_prior_labels": {"use_prior_labels": False},
    "no_bilstm1": {"use_bilstm1": False},
    "no_bilstm2": {"use_bilstm2": False},
    "no_gcn1": {"use_gcn1": False},
    "no_gcn2": {"use_gcn2": False},
    "no_gcns": {"use_gcn1": False, "use_gcn2": False},
    "no_bilstms": {"use_bilstm1": False, "use_bilstm2": False},
    "no_r2_loss": {"use_r2_loss": False},
}


def run_ablation(variants: Sequence[str], seeds: Sequence[int], epochs: int, n_train: int, n_test: int,
                 label_corruption: float = 0.3, base: RunConfig | None = None, verbose: bool = False):
    """SGCLS test metrics per variant and seed: {variant: [{r20, r50, r100, obj_acc}, ...]}."""
    base = base or RunConfig()
    rows = {v: [] for v in variants}
    for seed in seeds:
        cfg = base.replace(seed=seed, epochs=epochs, task="sgcls", label_corruption=label_corruption)
        splits = generate_splits(cfg, {"train": n_train, "test": n_test})
        train_ex = make_examples(*splits["train"])
        test_ex = make_examples(*splits["test"])
        for v in variants:
            result = train(cfg.replace(**VARIANTS[v]), train_ex)
            rep = evaluate_model(result.model, test_ex, "sgcls", modes=(True,))
            row = {
                "r20": rep.recall[(20, True)],
                "r50": rep.recall[(50, True)],
                "r100": rep.recall[(100, True)],
                "obj_acc": rep.object_accuracy,
            }
            rows[v].append(row)
            if verbose:
                print(f"seed {seed} {v}: " + " ".join(f"{k}={val:.4f}" for k, val in row.items()), flush=True)
    return rows
