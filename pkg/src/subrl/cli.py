"""Command line: ``subrl train|oracle|eval``.

Exit codes: 0 success / check passed, 1 error or failed check, 2 size refusal.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import config as C
from .core import SizeRefusal
from .oracle import (Verdict, brute_force_opt, check_monotone, check_submodular, curvature, dr_check, greedy_walk,
                     markovian_optimality_check, random_interior_point, enumerate_trajectories)
from .policies import load_policy
from .trainer import evaluate_policy, train

DEFAULT_EVAL_EPISODES = 1000


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))
    if getattr(args, "estimator", None):
        cfg.setdefault("train", {})["estimator"] = args.estimator
    if getattr(args, "policy", None):
        cfg.setdefault("policy", {})["kind"] = args.policy
    if getattr(args, "seed", None) is not None:
        cfg["seeds"] = [args.seed]
    elif getattr(args, "seeds", None) is not None:
        cfg["seeds"] = list(range(args.seeds))
    if getattr(args, "out", None):
        cfg["out"] = args.out
    return cfg


def _load(path, args) -> dict:
    cfg = _apply_overrides(C.load_config(path), args)
    C.validate(cfg)
    return cfg


def _opt(smdp, reward):
    """OPT when an exact brute force is feasible, else ``None``."""
    if not smdp.is_deterministic() or smdp.fixed_start() is None:
        return None
    try:
        return brute_force_opt(smdp, reward).value
    except SizeRefusal:
        return None


def run_seed(cfg: dict, seed: int, out: Path) -> dict:
    smdp, reward = C.build_environment(cfg)
    policy = C.build_policy(cfg, smdp, seed)
    tc = C.make_train_config(cfg, seed)
    policy, curve = train(smdp, reward, policy, tc)
    curve.to_csv(out / f"curve_seed{seed}.csv")
    policy.save(out / f"policy_seed{seed}")
    episodes = cfg.get("eval", {}).get("episodes", DEFAULT_EVAL_EPISODES)
    vals = evaluate_policy(smdp, reward, policy, episodes, seed)
    return {"seed": seed, "final_batch_J": curve.rows[-1][1], "eval_mean_J": float(vals.mean()),
            "eval_std_J": float(vals.std()), "episodes": episodes}


def cmd_train(args) -> int:
    cfg = _load(args.config, args)
    seeds = cfg.get("seeds", [0])
    out = Path(cfg.get("out", "runs"))
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(run_seed, [cfg] * len(seeds), seeds, [out] * len(seeds)))
    else:
        results = [run_seed(cfg, s, out) for s in seeds]
    finals = np.array([r["eval_mean_J"] for r in results])
    summary = {"config_hash": C.config_hash(cfg), "seeds": seeds,
               "final_mean_J": float(finals.mean()), "final_std_J": float(finals.std()),
               "per_seed": results}
    smdp, reward = C.build_environment(cfg)
    opt = _opt(smdp, reward)
    if opt is not None:
        summary["opt"] = opt
        summary["ratio"] = summary["final_mean_J"] / opt if opt else None
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps({k: v for k, v in summary.items() if k != "per_seed"}))
    return 0


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise ValueError("episodes must be >= 1")
    cfg = _load(args.config, args)
    smdp, reward = C.build_environment(cfg)
    policy = load_policy(args.checkpoint)
    if (policy.num_states, policy.num_actions, policy.horizon) != (smdp.num_states, smdp.num_actions, smdp.horizon):
        raise ValueError("checkpoint header does not match the configured environment")
    seed = args.seed if args.seed is not None else 0
    vals = evaluate_policy(smdp, reward, policy, args.episodes, seed)
    summary = {"checkpoint": str(args.checkpoint), "seed": seed, "episodes": args.episodes,
               "mean_J": float(vals.mean()), "std_J": float(vals.std())}
    opt = _opt(smdp, reward)
    if opt is not None:
        summary["opt"] = opt
        summary["ratio"] = summary["mean_J"] / opt if opt else None
    print(json.dumps(summary))
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2))
    return 0


def run_check(cfg: dict, check: str):
    smdp, reward = C.build_environment(cfg)
    ocfg = cfg.get("oracle", {})
    seed = ocfg.get("seed", 0)
    if check == "submodularity":
        return check_submodular(reward, samples=ocfg.get("samples", 10_000), tol=ocfg.get("tol", 1e-8), rng=seed)
    if check == "monotonicity":
        return check_monotone(reward, samples=ocfg.get("samples", 10_000), tol=ocfg.get("tol", 1e-8), rng=seed)
    if check == "brute-force":
        res = brute_force_opt(smdp, reward)
        return Verdict("brute-force", True, 0.0, None, {"opt": res.value, "argmax": res.argmax, "count": res.count})
    if check == "greedy":
        traj = greedy_walk(smdp, reward)
        opt = brute_force_opt(smdp, reward).value
        return Verdict("greedy", True, 0.0, None, {"greedy": traj.value, "opt": opt, "actions": traj.actions,
                                                   "ratio": traj.value / opt if opt else None})
    if check == "curvature":
        return Verdict("curvature", True, 0.0, None, {"c": curvature(reward)})
    if check == "dr-check":
        rng = np.random.default_rng(seed)
        enum = enumerate_trajectories(smdp, reward)
        worst, failed = 0.0, None
        for _ in range(ocfg.get("points", 100)):
            x = random_interior_point(rng, smdp.horizon, smdp.num_states)
            v = dr_check(smdp, reward, x, ocfg.get("fd_step", 1e-3), ocfg.get("tol", 1e-6), enum)
            worst = max(worst, v.max_violation)
            if not v.passed and failed is None:
                failed = {**(v.witness or {}), "x": x.tolist()}
        return Verdict("dr_check", failed is None, worst, failed, {"points": ocfg.get("points", 100)})
    if check == "markovian-optimality":
        return markovian_optimality_check(smdp, reward, ocfg.get("n_random", 100), rng=seed)
    raise ValueError(f"unknown check {check!r}")


CHECKS = ("submodularity", "monotonicity", "brute-force", "greedy", "curvature", "dr-check", "markovian-optimality")


def cmd_oracle(args) -> int:
    cfg = _load(args.config, args)
    try:
        verdict = run_check(cfg, args.check)
    except SizeRefusal as exc:
        print(json.dumps({"check": args.check, "pass": False, "refused": str(exc), "terms": exc.terms}))
        return 2
    doc = verdict.to_json()
    text = json.dumps(doc, default=float)
    print(text)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / f"oracle_{args.check}.json").write_text(text)
    return 0 if verdict.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subrl", description="Submodular RL: train, evaluate, verify.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train SubPO/ModPO for one or more seeds")
    t.add_argument("--config", required=True)
    g = t.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    t.add_argument("--out")
    t.add_argument("--estimator", choices=["subpo", "modpo"])
    t.add_argument("--policy", help="tabular | mlp | history:k")
    t.add_argument("--jobs", type=int, default=1)
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("oracle", help="run an exact check")
    o.add_argument("check", choices=CHECKS)
    o.add_argument("--config", required=True)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("eval", help="evaluate a checkpoint on fresh rollouts")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--episodes", type=int, default=DEFAULT_EVAL_EPISODES)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        print(f"invalid config at {path}: {exc.message}", file=sys.stderr)
        return 1
    except SizeRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
