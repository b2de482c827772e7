"""Score-function gradient estimators for SubPO and ModPO.

Both estimators weight ``grad log pi(a_i | s_i)`` by a return-to-go minus a
baseline.  SubPO's return-to-go is the suffix sum of marginal gains
``sum_{j >= i} F(s_{j+1} | tau_{0:j})``; ModPO's is the suffix sum of the
additive surrogate ``F({s_{j+1}})``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Batch, as_batch
from .policies import Policy, entropy, entropy_dlogits
from .rewards import RewardFn, modularize


@dataclass
class GradientEstimate:
    grad: np.ndarray
    batch_size: int
    mean_return: float
    mean_entropy: float

    def __add__(self, other: "GradientEstimate") -> "GradientEstimate":
        return GradientEstimate(self.grad + other.grad, self.batch_size, self.mean_return, self.mean_entropy)


class BaselineState:
    """Per-timestep exponential moving average of returns-to-go.

    ``update`` is only called between epochs, so within an epoch the
    baseline is a fixed function of the step index and the estimator stays
    unbiased.  ``decay=None`` gives the zero baseline.
    """

    def __init__(self, horizon: int, decay: float | None = 0.9):
        self.decay = decay
        self.table = np.zeros(horizon)
        self.initialized = False

    @classmethod
    def zero(cls, horizon: int) -> "BaselineState":
        return cls(horizon, None)

    def values(self, batch: Batch) -> np.ndarray:
        return np.broadcast_to(self.table, batch.actions.shape)

    def update(self, returns_to_go: np.ndarray, weights: np.ndarray | None = None) -> None:
        if self.decay is None or returns_to_go.size == 0:
            return
        mean = np.average(returns_to_go, axis=0, weights=weights)
        if not self.initialized:
            self.table = mean.copy()
            self.initialized = True
        else:
            self.table = self.decay * self.table + (1.0 - self.decay) * mean


class HistoryBaseline:
    """Arbitrary baseline ``b(tau_{0:i})`` given as ``fn(states[:i+1], actions[:i]) -> float``."""

    def __init__(self, fn: Callable[[tuple, tuple], float]):
        self.fn = fn

    def values(self, batch: Batch) -> np.ndarray:
        B, H = batch.actions.shape
        out = np.empty((B, H))
        for b in range(B):
            s, a = batch.states[b], batch.actions[b]
            for i in range(H):
                out[b, i] = self.fn(tuple(int(x) for x in s[: i + 1]), tuple(int(x) for x in a[:i]))
        return out

    def update(self, *args, **kw) -> None:
        pass


def _baseline_values(baseline, batch: Batch) -> np.ndarray:
    if baseline is None:
        return np.zeros(batch.actions.shape)
    return baseline.values(batch)


@dataclass
class StepData:
    """Observations and action probabilities for every ``(b, h)``, stacked h-major."""

    obs: object
    probs: np.ndarray


def prepare(batch: Batch, policy: Policy) -> StepData:
    B, H = batch.actions.shape
    obs = [policy.observe_batch(batch.states[:, : h + 1], h) for h in range(H)]
    if not obs:
        return StepData(np.zeros((0,), dtype=np.int64), np.zeros((0, policy.num_actions)))
    stacked = np.concatenate(obs, axis=0)
    return StepData(stacked, policy.probs(stacked))


def returns_to_go(rewards: np.ndarray) -> np.ndarray:
    """Suffix sums along the step axis."""
    return np.flip(np.cumsum(np.flip(rewards, axis=1), axis=1), axis=1)


def _score_gradient(batch: Batch, policy: Policy, weights: np.ndarray, steps: StepData | None):
    """``sum_b r_b sum_h weights[b, h] grad log pi(a_bh | s_bh)``."""
    B, H = batch.actions.shape
    if H == 0:
        return np.zeros(policy.num_params), 0.0
    steps = steps or prepare(batch, policy)
    scale = (batch.row_weights()[:, None] * weights).T.ravel()  # h-major
    acts = batch.actions.T.ravel()
    d = -steps.probs * scale[:, None]
    d[np.arange(acts.size), acts] += scale
    grad = policy.backward(steps.obs, d)
    ent = entropy(steps.probs).reshape(H, B)
    mean_ent = float((ent.mean(axis=0) * batch.row_weights()).sum())
    return grad, mean_ent


def subpo_gradient(batch, policy: Policy, baseline=None, steps: StepData | None = None) -> GradientEstimate:
    """Marginal-gain policy gradient averaged over the batch."""
    batch = as_batch(batch)
    w = returns_to_go(batch.gains) - _baseline_values(baseline, batch)
    grad, ent = _score_gradient(batch, policy, w, steps)
    return GradientEstimate(grad, len(batch), float(batch.row_weights() @ batch.values), ent)


def modular_rewards(batch: Batch, reward) -> np.ndarray:
    """``F({s_{j+1}})`` per step, shape ``(B, H)``."""
    r = reward if isinstance(reward, np.ndarray) else modularize(reward).state_reward
    return r[batch.states[:, 1:]]


def modpo_gradient(batch, policy: Policy, reward: RewardFn | np.ndarray, baseline=None,
                   steps: StepData | None = None) -> GradientEstimate:
    """Same estimator with the additive surrogate ``r(v) = F({v})`` in place of marginal gains."""
    batch = as_batch(batch)
    w = returns_to_go(modular_rewards(batch, reward)) - _baseline_values(baseline, batch)
    grad, ent = _score_gradient(batch, policy, w, steps)
    return GradientEstimate(grad, len(batch), float(batch.row_weights() @ batch.values), ent)


def entropy_gradient(batch, policy: Policy, coefficient: float, steps: StepData | None = None) -> GradientEstimate:
    """Gradient of ``coefficient * sum_h H(pi(.|s_h))`` at the visited states, batch-averaged."""
    if coefficient < 0:
        raise ValueError("entropy coefficient must be nonnegative")
    batch = as_batch(batch)
    B, H = batch.actions.shape
    if coefficient == 0 or H == 0:
        return GradientEstimate(np.zeros(policy.num_params), B, float(batch.row_weights() @ batch.values), 0.0)
    steps = steps or prepare(batch, policy)
    scale = np.tile(batch.row_weights(), H) * coefficient
    grad = policy.backward(steps.obs, entropy_dlogits(steps.probs) * scale[:, None])
    ent = entropy(steps.probs).reshape(H, B)
    return GradientEstimate(grad, B, float(batch.row_weights() @ batch.values),
                            float((ent.mean(axis=0) * batch.row_weights()).sum()))
