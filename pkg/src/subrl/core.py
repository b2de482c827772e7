"""Submodular MDPs, trajectories and the rollout engine.

States are integers ``v`` in ``range(num_states)``; the time-augmented state
at step ``h`` is the pair ``(h, v)``.  Transition tensors are indexed
``transition[h, v, a, v']``.  Stationary dynamics are stored as a broadcast
view of a single ``(V, A, V)`` table so a 30x30 grid with ``H=40`` does not
cost forty copies.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ROW_TOL = 1e-12


class ConfigurationError(ValueError):
    """Inconsistent dimensions or parameters between components."""


class SizeRefusal(RuntimeError):
    """An exact computation was refused because the instance is too large."""

    def __init__(self, message: str, terms: int, limit: int):
        super().__init__(f"{message}: {terms} terms exceeds limit {limit}")
        self.terms = terms
        self.limit = limit


@dataclass(frozen=True, eq=False)
class Smdp:
    """Finite-horizon controlled Markov process over integer states.

    The reward is kept separate (see :mod:`subrl.rewards`); an SMDP in the
    usual sense is the pair ``(Smdp, RewardFn)``.
    """

    num_states: int
    num_actions: int
    horizon: int
    initial_dist: np.ndarray
    transition: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        V, A, H = self.num_states, self.num_actions, self.horizon
        if V < 1 or A < 1 or H < 0:
            raise ConfigurationError(f"invalid sizes V={V}, A={A}, H={H}")
        rho = np.asarray(self.initial_dist, dtype=float)
        if rho.shape != (V,):
            raise ConfigurationError(f"initial_dist has shape {rho.shape}, expected ({V},)")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_TOL:
            raise ConfigurationError("initial_dist must be a probability vector")
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (H, V, A, V):
            raise ConfigurationError(f"transition has shape {P.shape}, expected {(H, V, A, V)}")
        tables = P[:1] if (H > 0 and P.strides[0] == 0) else P
        if tables.size:
            if np.any(tables < 0):
                raise ConfigurationError("negative transition probability")
            err = np.abs(tables.sum(axis=-1) - 1.0).max()
            if err > ROW_TOL:
                raise ConfigurationError(f"transition rows do not sum to 1 (max error {err:.3e})")
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "transition", P)

    @classmethod
    def stationary(cls, table: np.ndarray, horizon: int, initial_dist, meta=None) -> "Smdp":
        """Build an SMDP whose ``P_h`` is the same ``(V, A, V)`` table for every ``h``."""
        table = np.asarray(table, dtype=float)
        V, A, _ = table.shape
        P = np.broadcast_to(table, (horizon, V, A, V))
        return cls(V, A, horizon, np.asarray(initial_dist, dtype=float), P, dict(meta or {}))

    @property
    def is_stationary(self) -> bool:
        return self.horizon > 0 and self.transition.strides[0] == 0

    def is_deterministic(self) -> bool:
        tables = self.transition[:1] if self.is_stationary else self.transition
        return bool(np.all((tables == 0) | (tables == 1)))

    def fixed_start(self) -> int | None:
        nz = np.flatnonzero(self.initial_dist)
        return int(nz[0]) if len(nz) == 1 else None

    def successor_table(self) -> np.ndarray:
        """``(H, V, A)`` successor indices; only meaningful for deterministic dynamics."""
        cached = self.__dict__.get("_succ")
        if cached is None:
            if self.is_stationary:
                cached = np.broadcast_to(
                    self.transition[0].argmax(axis=-1),
                    (self.horizon, self.num_states, self.num_actions),
                )
            else:
                cached = self.transition.argmax(axis=-1)
            object.__setattr__(self, "_succ", cached)
        return cached

    def sample_next(self, h: int, states: np.ndarray, actions: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF draw of ``v' ~ P_h(.|v, a)`` for each row."""
        return inverse_cdf(self.transition[h, states, actions], u)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "initial_dist": self.initial_dist.tolist(),
            "transitions": np.asarray(self.transition).tolist(),
        }
        if self.meta:
            out["meta"] = _jsonable(self.meta)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Smdp":
        V, A, H = int(d["num_states"]), int(d["num_actions"]), int(d["horizon"])
        P = np.asarray(d["transitions"], dtype=float).reshape(H, V, A, V)
        return cls(V, A, H, np.asarray(d["initial_dist"], dtype=float), P, dict(d.get("meta", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Smdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling: smallest ``j`` with ``cumsum(p)[j] > u``."""
    probs = np.atleast_2d(probs)
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf <= np.asarray(u, dtype=float).reshape(-1, 1)).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


@dataclass(frozen=True)
class VisitedSet:
    """Time-augmented pairs ``(h, v)`` and their projection onto states."""

    pairs: frozenset

    @classmethod
    def from_states(cls, states: Iterable[int]) -> "VisitedSet":
        return cls(frozenset((h, int(v)) for h, v in enumerate(states)))

    @property
    def projected(self) -> frozenset:
        return frozenset(v for _, v in self.pairs)


@dataclass
class Trajectory:
    steps: list  # (h, state, action) for h = 0..H-1
    final_state: int
    marginal_gains: list
    initial_value: float

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> list:
        return [v for _, v, _ in self.steps] + [self.final_state]

    @property
    def actions(self) -> list:
        return [a for _, _, a in self.steps]

    @property
    def visited(self) -> VisitedSet:
        return VisitedSet.from_states(self.states)

    @property
    def value(self) -> float:
        return self.initial_value + float(np.sum(self.marginal_gains))


@dataclass
class Batch:
    """``B`` trajectories of a common horizon stored as arrays.

    ``gains[b, h]`` is the marginal gain of ``s_{h+1}`` given ``tau_{0:h}``.
    ``weights`` (optional) replaces the uniform ``1/B`` average, which is how
    the exact oracles feed every trajectory with its probability.
    """

    states: np.ndarray
    actions: np.ndarray
    gains: np.ndarray
    initial_values: np.ndarray
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.initial_values + self.gains.sum(axis=1)

    def row_weights(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return np.full(len(self), 1.0 / len(self))

    def trajectory(self, b: int) -> Trajectory:
        H = self.horizon
        steps = [(h, int(self.states[b, h]), int(self.actions[b, h])) for h in range(H)]
        return Trajectory(steps, int(self.states[b, H]), self.gains[b].tolist(), float(self.initial_values[b]))

    def trajectories(self) -> list:
        return [self.trajectory(b) for b in range(len(self))]

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory]) -> "Batch":
        if not trajs:
            raise ValueError("empty batch")
        for t in trajs:
            if t.marginal_gains is None or len(t.marginal_gains) != t.horizon:
                raise ValueError("trajectory is missing marginal gains")
        states = np.array([t.states for t in trajs], dtype=np.int64)
        actions = np.array([t.actions for t in trajs], dtype=np.int64).reshape(len(trajs), -1)
        gains = np.array([t.marginal_gains for t in trajs], dtype=float).reshape(len(trajs), -1)
        init = np.array([t.initial_value for t in trajs], dtype=float)
        return cls(states, actions, gains, init)


def as_batch(batch) -> Batch:
    if isinstance(batch, Batch):
        return batch
    if isinstance(batch, Trajectory):
        return Batch.from_trajectories([batch])
    return Batch.from_trajectories(list(batch))


def rollout_streams(master_seed: int, epoch: int, count: int, offset: int = 0) -> list:
    """One independent generator per rollout, keyed on ``(seed, epoch, index)``."""
    return [np.random.default_rng([master_seed, epoch, offset + b]) for b in range(count)]


def check_compatible(smdp: Smdp, policy) -> None:
    if policy.num_actions != smdp.num_actions:
        raise ConfigurationError(
            f"policy has {policy.num_actions} actions but the SMDP has {smdp.num_actions}"
        )
    if policy.num_states != smdp.num_states:
        raise ConfigurationError(
            f"policy observes {policy.num_states} states but the SMDP has {smdp.num_states}"
        )
    if getattr(policy, "horizon", smdp.horizon) != smdp.horizon:
        raise ConfigurationError(f"policy horizon {policy.horizon} != SMDP horizon {smdp.horizon}")


def rollout_batch(smdp: Smdp, reward, policy, rngs: Sequence[np.random.Generator]) -> Batch:
    """Sample ``len(rngs)`` trajectories in lockstep.

    Each rollout draws its ``1 + 2H`` uniforms from its own generator up
    front (initial state, then action and successor per step), so a
    trajectory depends only on its stream and not on the batch it ran in.
    """
    check_compatible(smdp, policy)
    B, H = len(rngs), smdp.horizon
    u = np.stack([rng.random(1 + 2 * H) for rng in rngs])
    states = np.empty((B, H + 1), dtype=np.int64)
    actions = np.empty((B, H), dtype=np.int64)
    gains = np.empty((B, H))
    states[:, 0] = inverse_cdf(np.broadcast_to(smdp.initial_dist, (B, smdp.num_states)), u[:, 0])
    ev = reward.batch_evaluator(B)
    init = ev.add(0, states[:, 0])
    deterministic = smdp.is_deterministic()
    succ = smdp.successor_table() if deterministic else None
    for h in range(H):
        obs = policy.observe_batch(states[:, : h + 1], h)
        a = inverse_cdf(policy.probs(obs), u[:, 1 + 2 * h])
        actions[:, h] = a
        if deterministic:
            nxt = succ[h, states[:, h], a]
        else:
            nxt = smdp.sample_next(h, states[:, h], a, u[:, 2 + 2 * h])
        states[:, h + 1] = nxt
        gains[:, h] = ev.add(h + 1, nxt)
    return Batch(states, actions, gains, np.asarray(init, dtype=float))


def rollout(smdp: Smdp, reward, policy, rng: np.random.Generator) -> Trajectory:
    """Sample a single trajectory; identical to row 0 of :func:`rollout_batch` on ``[rng]``."""
    return rollout_batch(smdp, reward, policy, [rng]).trajectory(0)


def trajectory_value(reward, traj) -> float:
    """``F`` of the visited set, recomputed from scratch."""
    if isinstance(traj, Trajectory):
        return reward.evaluate(traj.visited)
    return reward.evaluate(VisitedSet.from_states(traj))
