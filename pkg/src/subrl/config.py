"""Experiment configuration: JSON schema and builders."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from .core import Smdp
from .envs import (EpsilonBanditSpec, GridSpec, build_density, build_epsilon_bandit, build_grid,
                   build_two_rooms, load_environment, place_items)
from .policies import make_policy
from .rewards import reward_from_config
from .trainer import TrainConfig

_num = {"type": "number"}
_int = {"type": "integer"}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "subrl experiment",
    "type": "object",
    "required": ["environment", "reward"],
    "additionalProperties": False,
    "properties": {
        "environment": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["grid", "two_rooms", "epsilon_bandit", "file"]},
                "width": {**_int, "minimum": 1},
                "height": {**_int, "minimum": 1},
                "horizon": {**_int, "minimum": 0},
                "slip": {**_num, "minimum": 0, "maximum": 1},
                "start": {"oneOf": [{"const": "uniform"},
                                    {"type": "array", "items": _int, "minItems": 2, "maxItems": 2}]},
                "corridor_length": {**_int, "minimum": 1},
                "room_size": {**_int, "minimum": 1},
                "num_states": {**_int, "minimum": 2},
                "epsilon": {"oneOf": [_num, {"type": "array", "items": _num}]},
                "initial_dist": {"type": "array", "items": _num},
                "path": {"type": "string"},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "grid"}}},
                 "then": {"required": ["width", "height", "horizon"]}},
                {"if": {"properties": {"kind": {"const": "two_rooms"}}},
                 "then": {"required": ["corridor_length", "room_size", "horizon"]}},
                {"if": {"properties": {"kind": {"const": "epsilon_bandit"}}},
                 "then": {"required": ["num_states", "horizon"]}},
                {"if": {"properties": {"kind": {"const": "file"}}}, "then": {"required": ["path"]}},
            ],
        },
        "reward": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["weighted_coverage", "item_collection", "gp_mutual_information", "modular"]},
                "density": {"type": "object", "required": ["kind"]},
                "density_file": {"type": "string"},
                "density_seed": _int,
                "footprint_radius": {**_int, "minimum": 0},
                "groups": {"type": "array", "items": {"type": "array", "items": _int}},
                "quotas": {"type": "array", "items": {**_int, "minimum": 1}},
                "random_groups": {
                    "type": "object",
                    "required": ["sizes", "quotas"],
                    "properties": {"sizes": {"type": "array", "items": _int},
                                   "quotas": {"type": "array", "items": _int},
                                   "seed": _int},
                },
                "state_reward": {"type": "array", "items": _num},
                "discount": _num,
                "lengthscale": {**_num, "exclusiveMinimum": 0},
                "signal_variance": {**_num, "exclusiveMinimum": 0},
                "noise_variance": {**_num, "exclusiveMinimum": 0},
                "points": {"type": "array"},
            },
        },
        "policy": {
            "type": "object",
            "properties": {
                "kind": {"type": "string", "pattern": "^(tabular|mlp|history:([0-9]+|H))$"},
                "hidden": {"type": "array", "items": {**_int, "minimum": 1}, "minItems": 2, "maxItems": 2},
                "init_seed": _int,
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {**_int, "minimum": 1},
                "batch_size": {**_int, "minimum": 1},
                "lr": {**_num, "exclusiveMinimum": 0},
                "optimizer": {"enum": ["sgd", "adam"]},
                "entropy_coef": {**_num, "minimum": 0},
                "estimator": {"enum": ["subpo", "modpo"]},
                "baseline_decay": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
            },
        },
        "eval": {"type": "object", "properties": {"episodes": {**_int, "minimum": 1}}},
        "oracle": {
            "type": "object",
            "properties": {
                "samples": {**_int, "minimum": 1},
                "tol": {**_num, "minimum": 0},
                "points": {**_int, "minimum": 1},
                "fd_step": {**_num, "exclusiveMinimum": 0},
                "n_random": {**_int, "minimum": 1},
                "seed": _int,
            },
        },
        "seeds": {"type": "array", "items": _int, "minItems": 1},
        "out": {"type": "string"},
    },
}


def validate(cfg: dict) -> None:
    """Raise :class:`jsonschema.ValidationError` on an invalid config."""
    jsonschema.validate(cfg, SCHEMA)


def load_config(path) -> dict:
    cfg = json.loads(Path(path).read_text())
    base = Path(path).resolve().parent
    for block, key in (("environment", "path"), ("reward", "density_file")):
        p = cfg.get(block, {}).get(key)
        if p and not Path(p).is_absolute():
            cfg[block][key] = str(base / p)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def build_environment(cfg: dict) -> tuple:
    """``(smdp, reward)`` from a validated config."""
    env = cfg["environment"]
    kind = env["kind"]
    reward_cfg = copy.deepcopy(cfg["reward"])
    if kind == "grid":
        start = env.get("start", [0, 0])
        smdp = build_grid(GridSpec(env["width"], env["height"], env["horizon"], env.get("slip", 0.0),
                                   start if start == "uniform" else tuple(start)))
    elif kind == "two_rooms":
        smdp = build_two_rooms(env["corridor_length"], env["room_size"], env["horizon"])
    elif kind == "epsilon_bandit":
        smdp = build_epsilon_bandit(EpsilonBanditSpec(env["num_states"], env["horizon"],
                                                      env.get("epsilon", 0.0), env.get("initial_dist")))
    else:
        smdp, file_reward = load_environment(env["path"])
        if file_reward and reward_cfg.get("kind") == file_reward.get("kind"):
            reward_cfg = {**file_reward, **reward_cfg}
    return smdp, make_reward(reward_cfg, smdp)


def _grid(smdp: Smdp):
    if "grid_width" in smdp.meta:
        return smdp.meta["grid_width"], smdp.meta["grid_height"]
    return None


def make_reward(reward_cfg: dict, smdp: Smdp):
    grid = _grid(smdp)
    density, mask = None, None
    if "blocked" in smdp.meta:
        mask = ~np.asarray(smdp.meta["blocked"], dtype=bool)
    if reward_cfg["kind"] == "weighted_coverage" and "density" in reward_cfg:
        density = build_density(reward_cfg["density"], grid[0], grid[1], reward_cfg.get("density_seed", 0)).values
    if reward_cfg["kind"] == "weighted_coverage" and mask is not None:
        density = (np.ones((grid[1], grid[0])) if density is None else density) * mask
    if reward_cfg["kind"] == "item_collection" and "random_groups" in reward_cfg:
        rg = reward_cfg["random_groups"]
        exclude = [smdp.fixed_start()] if smdp.fixed_start() is not None else []
        reward_cfg = {**reward_cfg,
                      "groups": place_items(grid[0], grid[1], rg["sizes"], rg.get("seed", 0), exclude),
                      "quotas": rg["quotas"]}
    return reward_from_config(reward_cfg, smdp.num_states, grid, density, mask)


def make_train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(seed=seed, **cfg.get("train", {}))


def build_policy(cfg: dict, smdp: Smdp, seed: int):
    pcfg = cfg.get("policy", {})
    return make_policy(pcfg.get("kind", "tabular"), smdp.num_states, smdp.num_actions, smdp.horizon,
                       seed=pcfg.get("init_seed", seed), hidden=tuple(pcfg.get("hidden", (64, 64))))
