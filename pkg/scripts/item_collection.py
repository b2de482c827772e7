"""SubPO-NM (history window k=H), SubPO-M and ModPO on the 8x8 two-group item task.

    python3 scripts/item_collection.py --seeds 20 --out runs/items
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from subrl.envs import GridSpec, build_grid, place_items
from subrl.policies import make_policy
from subrl.rewards import ItemCollection
from subrl.trainer import TrainConfig, evaluate_policy, train

VARIANTS = (("subpo_nm", "history:H", "subpo"), ("subpo_m", "mlp", "subpo"), ("modpo", "mlp", "modpo"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--horizon", type=int, default=16)
    ap.add_argument("--layout-seed", type=int, default=1)
    ap.add_argument("--out", default="runs/items")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    smdp = build_grid(GridSpec(8, 8, args.horizon, slip=0.1, start=(0, 0)))
    groups = place_items(8, 8, [6, 6], seed=args.layout_seed, exclude=[0])
    reward = ItemCollection(64, groups, [3, 3])
    print(f"groups {groups}")

    rows = []
    for name, spec, est in VARIANTS:
        for seed in range(args.seeds):
            policy = make_policy(spec, 64, 5, args.horizon, seed=seed)
            cfg = TrainConfig(epochs=args.epochs, batch_size=64, lr=args.lr, estimator=est, seed=seed)
            policy, curve = train(smdp, reward, policy, cfg)
            curve.to_csv(out / f"curve_{name}_seed{seed}.csv")
            final = float(evaluate_policy(smdp, reward, policy, 1000, seed).mean())
            rows.append((name, seed, final))
            print(f"{name} seed {seed}: final J {final:.3f}", flush=True)

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "final_J"])
        w.writerows(rows)
    for name, _, _ in VARIANTS:
        print(f"{name}: median {np.median([r[2] for r in rows if r[0] == name]):.3f}")


if __name__ == "__main__":
    main()
