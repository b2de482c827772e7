"""Monotone submodular trajectory rewards with incremental marginal gains.

Every reward here except the discounted modular one drops the time index
before evaluation, so a state visited twice counts once.  Each kind has a
from-scratch :meth:`RewardFn.value` (the reference path) and an evaluator
that maintains the visited prefix and returns ``F(s | prefix)`` per step.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .core import VisitedSet
from .gp import CholState, GpParams, mutual_information


class RewardFn:
    kind = "abstract"
    time_aware = False

    def __init__(self, num_states: int):
        self.num_states = int(num_states)

    # reference path -------------------------------------------------------

    def value(self, states: frozenset) -> float:
        """``F`` of a set of (time-dropped) states."""
        raise NotImplementedError

    def value_pairs(self, pairs: frozenset) -> float:
        return self.value(frozenset(v for _, v in pairs))

    def evaluate(self, items) -> float:
        """``F`` of a :class:`VisitedSet`, a set of ``(h, v)`` pairs, or a set of states."""
        if isinstance(items, VisitedSet):
            pairs = items.pairs
        else:
            items = list(items)
            if items and isinstance(items[0], tuple):
                pairs = frozenset((int(h), int(v)) for h, v in items)
            else:
                pairs = None
                states = frozenset(int(v) for v in items)
        if pairs is not None:
            self._check(v for _, v in pairs)
            return float(self.value_pairs(pairs))
        self._check(states)
        return float(self.value(states))

    def _check(self, states: Iterable[int]) -> None:
        for v in states:
            if not 0 <= v < self.num_states:
                raise IndexError(f"state {v} outside ground set of size {self.num_states}")

    def singleton_values(self) -> np.ndarray:
        """``F({v})`` for every state."""
        return np.array([self.value(frozenset([v])) for v in range(self.num_states)])

    # incremental path -----------------------------------------------------

    def evaluator(self) -> "Evaluator":
        return RecomputeEvaluator(self)

    def batch_evaluator(self, size: int):
        return ListBatchEvaluator([self.evaluator() for _ in range(size)])


class Evaluator:
    """Incremental state for one prefix; single owner."""

    value = 0.0

    def gain(self, h: int, v: int) -> float:
        raise NotImplementedError

    def add(self, h: int, v: int) -> float:
        raise NotImplementedError

    def copy(self) -> "Evaluator":
        raise NotImplementedError


class RecomputeEvaluator(Evaluator):
    """Fallback that recomputes ``F`` from scratch on every query."""

    def __init__(self, reward: RewardFn):
        self.reward = reward
        self.pairs: set = set()
        self.value = 0.0

    def _key(self, h, v):
        return (int(h), int(v)) if self.reward.time_aware else (0, int(v))

    def gain(self, h, v):
        key = self._key(h, v)
        if key in self.pairs:
            return 0.0
        return self.reward.value_pairs(frozenset(self.pairs | {key})) - self.value

    def add(self, h, v):
        key = self._key(h, v)
        if key in self.pairs:
            return 0.0
        self.pairs.add(key)
        new = self.reward.value_pairs(frozenset(self.pairs))
        g, self.value = new - self.value, new
        return g

    def copy(self):
        new = RecomputeEvaluator(self.reward)
        new.pairs = set(self.pairs)
        new.value = self.value
        return new


class ListBatchEvaluator:
    def __init__(self, evaluators: Sequence[Evaluator]):
        self.evaluators = list(evaluators)

    def add(self, h: int, states: np.ndarray) -> np.ndarray:
        return np.array([ev.add(h, int(v)) for ev, v in zip(self.evaluators, states)])


def marginal_gain(reward: RewardFn, s, state: Evaluator | None = None):
    """Return ``(F(s | A), state for A + {s})``; ``state=None`` means ``A`` is empty.

    The input state is not modified.
    """
    h, v = s
    new = reward.evaluator() if state is None else state.copy()
    return new.add(h, v), new


# -- weighted coverage -------------------------------------------------------


class WeightedCoverage(RewardFn):
    """``F(S) = sum of density over the union of square footprints of S``."""

    kind = "weighted_coverage"

    def __init__(self, width: int, height: int, density=None, footprint_radius: int = 1,
                 mask=None):
        super().__init__(width * height)
        self.width, self.height = int(width), int(height)
        self.footprint_radius = int(footprint_radius)
        if self.footprint_radius < 0:
            raise ValueError("footprint radius must be nonnegative")
        if density is None:
            density = np.ones((height, width))
        density = np.asarray(density, dtype=float).reshape(height, width)
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise ValueError("density must be finite and nonnegative")
        self.density = density
        self._dens = density.ravel()
        self._dens_pad = np.append(self._dens, 0.0)
        feet = [self.footprint(v) for v in range(self.num_states)]
        if mask is not None:
            # sensing does not pass through blocked cells
            ok = np.asarray(mask, dtype=bool).ravel()
            feet = [f[ok[f]] for f in feet]
        self._feet = feet
        m = max(len(f) for f in feet)
        pad = np.full((self.num_states, m), self.num_states, dtype=np.int64)
        for v, f in enumerate(feet):
            pad[v, : len(f)] = f
        self._foot_pad = pad

    def footprint(self, v: int) -> np.ndarray:
        y, x = divmod(int(v), self.width)
        r = self.footprint_radius
        xs = np.arange(max(0, x - r), min(self.width, x + r + 1))
        ys = np.arange(max(0, y - r), min(self.height, y + r + 1))
        return (ys[:, None] * self.width + xs[None, :]).ravel()

    def covered(self, states: Iterable[int]) -> np.ndarray:
        cells = np.zeros(self.num_states, dtype=bool)
        for v in states:
            cells[self._feet[v]] = True
        return cells

    def value(self, states):
        return float(self._dens[self.covered(states)].sum())

    def evaluator(self):
        return _CoverageEvaluator(self)

    def batch_evaluator(self, size):
        return _CoverageBatch(self, size)


class _CoverageEvaluator(Evaluator):
    def __init__(self, reward: WeightedCoverage):
        self.reward = reward
        self.cells = np.zeros(reward.num_states, dtype=bool)
        self.value = 0.0

    def gain(self, h, v):
        f = self.reward._feet[v]
        return float(self.reward._dens[f][~self.cells[f]].sum())

    def add(self, h, v):
        g = self.gain(h, v)
        self.cells[self.reward._feet[v]] = True
        self.value += g
        return g

    def copy(self):
        new = _CoverageEvaluator(self.reward)
        new.cells = self.cells.copy()
        new.value = self.value
        return new


class _CoverageBatch:
    def __init__(self, reward: WeightedCoverage, size: int):
        self.reward = reward
        self.cells = np.zeros((size, reward.num_states + 1), dtype=bool)
        self.cells[:, -1] = True
        self.rows = np.arange(size)[:, None]

    def add(self, h, states):
        feet = self.reward._foot_pad[states]
        fresh = ~self.cells[self.rows, feet]
        g = (self.reward._dens_pad[feet] * fresh).sum(axis=1)
        self.cells[self.rows, feet] = True
        return g


# -- item collection ---------------------------------------------------------


class ItemCollection(RewardFn):
    """``F(S) = sum_i min(|S & g_i|, d_i)`` over disjoint item groups."""

    kind = "item_collection"

    def __init__(self, num_states: int, groups: Sequence[Sequence[int]], quotas: Sequence[int]):
        super().__init__(num_states)
        if len(groups) != len(quotas):
            raise ValueError("need one quota per group")
        self.groups = [sorted(int(v) for v in g) for g in groups]
        self.quotas = np.array([int(d) for d in quotas], dtype=np.int64)
        group_of = np.full(num_states, -1, dtype=np.int64)
        for i, g in enumerate(self.groups):
            for v in g:
                if not 0 <= v < num_states:
                    raise ValueError(f"item state {v} out of range")
                if group_of[v] >= 0:
                    raise ValueError("item groups must be disjoint")
                group_of[v] = i
            if not 1 <= self.quotas[i] <= len(g):
                raise ValueError(f"quota {self.quotas[i]} invalid for group of size {len(g)}")
        self.group_of = group_of

    def value(self, states):
        counts = np.zeros(len(self.groups), dtype=np.int64)
        for v in states:
            if self.group_of[v] >= 0:
                counts[self.group_of[v]] += 1
        return float(np.minimum(counts, self.quotas).sum())

    def evaluator(self):
        return _ItemEvaluator(self)

    def batch_evaluator(self, size):
        return _ItemBatch(self, size)


class _ItemEvaluator(Evaluator):
    def __init__(self, reward: ItemCollection):
        self.reward = reward
        self.seen: set = set()
        self.counts = np.zeros(len(reward.groups), dtype=np.int64)
        self.value = 0.0

    def gain(self, h, v):
        g = self.reward.group_of[v]
        if v in self.seen or g < 0:
            return 0.0
        return float(self.counts[g] < self.reward.quotas[g])

    def add(self, h, v):
        gain = self.gain(h, v)
        if v not in self.seen:
            self.seen.add(v)
            g = self.reward.group_of[v]
            if g >= 0:
                self.counts[g] += 1
        self.value += gain
        return gain

    def copy(self):
        new = _ItemEvaluator(self.reward)
        new.seen = set(self.seen)
        new.counts = self.counts.copy()
        new.value = self.value
        return new


class _ItemBatch:
    def __init__(self, reward: ItemCollection, size: int):
        self.reward = reward
        self.seen = np.zeros((size, reward.num_states), dtype=bool)
        self.counts = np.zeros((size, len(reward.groups) + 1), dtype=np.int64)
        self.quota = np.append(reward.quotas, 0)
        self.rows = np.arange(size)

    def add(self, h, states):
        g = self.reward.group_of[states]  # -1 maps onto the sentinel column
        fresh = ~self.seen[self.rows, states]
        gain = fresh & (g >= 0) & (self.counts[self.rows, g] < self.quota[g])
        self.seen[self.rows, states] = True
        self.counts[self.rows, g] += fresh & (g >= 0)
        return gain.astype(float)


# -- modular -----------------------------------------------------------------


class Modular(RewardFn):
    """``F(S) = sum_{v in S} r(v)`` on distinct states.

    With ``discount`` set the reward is instead defined on time-augmented
    pairs, ``F = sum gamma^h r(v)``, and repeated states count again.
    """

    kind = "modular"

    def __init__(self, state_reward, discount: float | None = None):
        r = np.asarray(state_reward, dtype=float).ravel()
        super().__init__(r.size)
        if not np.all(np.isfinite(r)):
            raise ValueError("state rewards must be finite")
        self.state_reward = r
        self.discount = discount
        self.time_aware = discount is not None

    def value(self, states):
        return float(sum(self.state_reward[v] for v in sorted(states)))

    def value_pairs(self, pairs):
        if not self.time_aware:
            return super().value_pairs(pairs)
        return float(sum(self.discount**h * self.state_reward[v] for h, v in sorted(pairs)))

    def singleton_values(self):
        return self.state_reward.copy()

    def evaluator(self):
        if self.time_aware:
            return RecomputeEvaluator(self)
        return _ModularEvaluator(self)

    def batch_evaluator(self, size):
        if self.time_aware:
            return super().batch_evaluator(size)
        return _ModularBatch(self, size)


class _ModularEvaluator(Evaluator):
    def __init__(self, reward: Modular):
        self.reward = reward
        self.seen: set = set()
        self.value = 0.0

    def gain(self, h, v):
        return 0.0 if v in self.seen else float(self.reward.state_reward[v])

    def add(self, h, v):
        g = self.gain(h, v)
        self.seen.add(v)
        self.value += g
        return g

    def copy(self):
        new = _ModularEvaluator(self.reward)
        new.seen = set(self.seen)
        new.value = self.value
        return new


class _ModularBatch:
    def __init__(self, reward: Modular, size: int):
        self.r = reward.state_reward
        self.seen = np.zeros((size, reward.num_states), dtype=bool)
        self.rows = np.arange(size)

    def add(self, h, states):
        fresh = ~self.seen[self.rows, states]
        self.seen[self.rows, states] = True
        return np.where(fresh, self.r[states], 0.0)


class Modularized(Modular):
    """Additive surrogate ``r(v) = F({v})`` of a wrapped reward."""

    kind = "modularized_wrapper"

    def __init__(self, wrapped: RewardFn):
        super().__init__(wrapped.singleton_values())
        self.wrapped = wrapped


def modularize(reward: RewardFn) -> Modular:
    if isinstance(reward, Modular) and not reward.time_aware:
        return reward
    return Modularized(reward)


def zero_reward(num_states: int) -> Modular:
    return Modular(np.zeros(num_states))


# -- GP information gain ----------------------------------------------------


class GpMutualInformation(RewardFn):
    """``F(S) = I(y_S; f)`` for a GP prior over the state coordinates."""

    kind = "gp_mutual_information"

    def __init__(self, params: GpParams):
        super().__init__(params.num_points)
        self.params = params

    def value(self, states):
        return mutual_information(self.params, sorted(states))

    def evaluator(self):
        return _GpEvaluator(self)


class _GpEvaluator(Evaluator):
    def __init__(self, reward: GpMutualInformation):
        self.reward = reward
        self.chol = CholState(reward.params)
        self.seen: set = set()

    @property
    def value(self):
        return self.chol.value

    def gain(self, h, v):
        return 0.0 if v in self.seen else self.chol.gain(v)

    def add(self, h, v):
        if v in self.seen:
            return 0.0
        self.seen.add(v)
        return self.chol.extend(v)

    def copy(self):
        new = _GpEvaluator.__new__(_GpEvaluator)
        new.reward = self.reward
        new.chol = self.chol.copy()
        new.seen = set(self.seen)
        return new


# -- arbitrary set functions ------------------------------------------------


class SetFunction(RewardFn):
    """Wrap a Python callable on frozensets of states.  No structure is assumed."""

    kind = "set_function"

    def __init__(self, fn: Callable[[frozenset], float], num_states: int):
        super().__init__(num_states)
        self.fn = fn

    def value(self, states):
        return float(self.fn(frozenset(states)))


# -- config -----------------------------------------------------------------


def reward_from_config(cfg: dict, num_states: int, grid: tuple | None = None,
                       density=None, mask=None) -> RewardFn:
    """Build a reward from its JSON block.

    ``grid`` is ``(width, height)`` for grid-based kinds; ``density`` overrides
    ``density_file`` when the caller already built a field.
    """
    kind = cfg["kind"]
    if kind == "weighted_coverage":
        if grid is None:
            raise ValueError("coverage reward needs a grid environment")
        if density is None and cfg.get("density_file"):
            density = np.loadtxt(cfg["density_file"], delimiter=",", ndmin=2)
        return WeightedCoverage(grid[0], grid[1], density, cfg.get("footprint_radius", 1), mask=mask)
    if kind == "item_collection":
        return ItemCollection(num_states, cfg["groups"], cfg["quotas"])
    if kind == "modular":
        return Modular(cfg["state_reward"], cfg.get("discount"))
    if kind == "gp_mutual_information":
        kw = {k: cfg[k] for k in ("lengthscale", "signal_variance", "noise_variance") if k in cfg}
        if "points" in cfg:
            params = GpParams(np.asarray(cfg["points"], dtype=float), **kw)
        elif grid is not None:
            params = GpParams.grid(grid[0], grid[1], **kw)
        else:
            params = GpParams(np.arange(num_states, dtype=float), **kw)
        return GpMutualInformation(params)
    raise ValueError(f"unknown reward kind {kind!r}")
