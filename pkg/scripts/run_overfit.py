"""Memorize a small synthetic training set and report training-split metrics.

Usage: python scripts/run_overfit.py [--scenes 50] [--epochs 200] [--seed 0] [--every 10]
"""
import argparse
import time

from r2net.config import RunConfig
from r2net.dataset import generate_splits, make_examples
from r2net.train import evaluate_model, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--every", type=int, default=10, help="evaluate every this many epochs")
    args = ap.parse_args()

    cfg = RunConfig(seed=args.seed, epochs=args.epochs)
    examples = make_examples(*generate_splits(cfg, {"train": args.scenes})["train"])
    t0 = time.time()

    def log(epoch, model, result):
        if epoch % args.every == 0 or epoch == cfg.epochs:
            pred = evaluate_model(model, examples, "predcls", ks=(20,), modes=(True,))
            sg = evaluate_model(model, examples, "sgcls", ks=(20,), modes=(True,))
            print(f"epoch {epoch:4d} loss {result.losses[-1]:.4f} predcls R@20 {pred.recall[(20, True)]:.4f} "
                  f"sgcls R@20 {sg.recall[(20, True)]:.4f} obj acc {sg.object_accuracy:.4f} "
                  f"({time.time() - t0:.0f}s)", flush=True)
        return False

    train(cfg, examples, callback=log)


if __name__ == "__main__":
    main()
