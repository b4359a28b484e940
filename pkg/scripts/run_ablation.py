"""Compare the full model with ablated variants on synthetic SGCLS data.

Usage: python scripts/run_ablation.py [--seeds 0 1 2] [--epochs 8] [--train 500] [--test 200]
"""
import argparse
import time

import numpy as np

from r2net.ablation import VARIANTS, run_ablation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--train", type=int, default=500)
    ap.add_argument("--test", type=int, default=200)
    ap.add_argument("--variants", nargs="+", default=["all", "no_refiner", "no_gcn1"], choices=sorted(VARIANTS))
    args = ap.parse_args()
    t0 = time.time()
    rows = run_ablation(args.variants, args.seeds, args.epochs, args.train, args.test, verbose=True)
    print(f"{'variant':<14} {'R@20':>7} {'R@50':>7} {'R@100':>7} {'obj acc':>8}")
    for name in args.variants:
        runs = rows[name]
        mean = {k: float(np.mean([r[k] for r in runs])) for k in runs[0]}
        print(f"{name:<14} {mean['r20']:7.4f} {mean['r50']:7.4f} {mean['r100']:7.4f} {mean['obj_acc']:8.4f}")
    print(f"elapsed {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
