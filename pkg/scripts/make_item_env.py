"""Write an item-collection environment file usable as ``{"kind": "file"}`` in a config.

    python3 scripts/make_item_env.py --groups 6 6 --quotas 3 3 --seed 1 --out configs/items_8x8_env.json
"""
import argparse

from subrl.envs import GridSpec, build_grid, place_items, save_environment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=int, default=8)
    ap.add_argument("--height", type=int, default=8)
    ap.add_argument("--horizon", type=int, default=16)
    ap.add_argument("--slip", type=float, default=0.1)
    ap.add_argument("--start", type=int, nargs=2, default=[0, 0])
    ap.add_argument("--groups", type=int, nargs="+", default=[6, 6])
    ap.add_argument("--quotas", type=int, nargs="+", default=[3, 3])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    if len(args.groups) != len(args.quotas):
        ap.error("need one quota per group")
    smdp = build_grid(GridSpec(args.width, args.height, args.horizon, args.slip, tuple(args.start)))
    start = args.start[1] * args.width + args.start[0]
    groups = place_items(args.width, args.height, args.groups, args.seed, exclude=[start])
    save_environment(args.out, smdp, {"kind": "item_collection", "groups": groups, "quotas": args.quotas})
    print(f"wrote {args.out}: groups {groups}")


if __name__ == "__main__":
    main()
