"""Fraction of seeds reaching 0.95 OPT on the 5x5 coverage grid, per Adam learning rate.

    python3 scripts/lr_sweep_5x5.py --lrs 0.001 0.01 0.1
"""
import argparse

import numpy as np

from subrl.envs import GridSpec, build_grid
from subrl.oracle import brute_force_opt
from subrl.policies import TabularSoftmax
from subrl.rewards import WeightedCoverage
from subrl.trainer import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lrs", type=float, nargs="+", default=[1e-3, 1e-2, 1e-1])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=300)
    args = ap.parse_args()

    smdp = build_grid(GridSpec(5, 5, 6, start=(0, 0)))
    reward = WeightedCoverage(5, 5, np.ones((5, 5)), 1)
    opt = brute_force_opt(smdp, reward).value
    print(f"OPT = {opt:g}")
    print("lr,hits,median_ratio,min_ratio")
    for lr in args.lrs:
        ratios = []
        for seed in range(args.seeds):
            _, curve = train(smdp, reward, TabularSoftmax(25, 5, 6),
                             TrainConfig(epochs=args.epochs, batch_size=64, lr=lr, seed=seed))
            ratios.append(curve.mean_J[-1] / opt)
        ratios = np.array(ratios)
        print(f"{lr:g},{int((ratios >= 0.95).sum())}/{args.seeds},{np.median(ratios):.3f},{ratios.min():.3f}",
              flush=True)


if __name__ == "__main__":
    main()
