"""Exact small-instance computations used to check everything else.

Trajectories are enumerated once per ``(smdp, reward)`` pair; the
policy-independent part of each trajectory's probability (initial state and
transitions), its value and its marginal gains are cached, so ``J`` for a new
policy costs one vectorised pass over the enumeration.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Batch, SizeRefusal, Smdp, Trajectory
from .estimator import _score_gradient, modpo_gradient, prepare, subpo_gradient
from .policies import Policy, ProbabilityTable
from .rewards import RewardFn

MAX_TERMS = 10**7


@dataclass
class ExactResult:
    value: float
    argmax: list | None = None
    count: int = 0


@dataclass
class Verdict:
    check: str
    passed: bool
    max_violation: float = 0.0
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"check": self.check, "pass": bool(self.passed), "max_violation": float(self.max_violation)}
        if self.witness is not None:
            out["witness"] = self.witness
        out.update(self.details)
        return out


# -- enumeration ---------------------------------------------------------------


def enumeration_size(smdp: Smdp) -> int:
    """Number of ``(states, actions)`` sequences with positive dynamics probability."""
    count = (smdp.initial_dist > 0).astype(object)
    for h in range(smdp.horizon):
        branches = (smdp.transition[h] > 0).sum(axis=1).astype(object)  # (V, V') action counts
        count = count @ branches
    return int(count.sum())


def enumerate_trajectories(smdp: Smdp, reward: RewardFn, limit: int = MAX_TERMS) -> Batch:
    """Every trajectory with positive dynamics probability.

    ``weights`` holds ``rho(s_0) prod P(s_{h+1} | s_h, a_h)``; multiply by the
    policy factor to get the trajectory probability.
    """
    terms = enumeration_size(smdp)
    if terms > limit:
        raise SizeRefusal("trajectory enumeration too large", terms, limit)
    s0 = np.flatnonzero(smdp.initial_dist > 0)
    states = s0[:, None].astype(np.int64)
    actions = np.zeros((s0.size, 0), dtype=np.int64)
    weight = smdp.initial_dist[s0].copy()
    for h in range(smdp.horizon):
        cand = smdp.transition[h, states[:, h]]  # (N, A, V)
        row, a, nxt = np.nonzero(cand > 0)
        weight = weight[row] * cand[row, a, nxt]
        states = np.column_stack([states[row], nxt])
        actions = np.column_stack([actions[row], a])
    N = states.shape[0]
    ev = reward.batch_evaluator(N)
    init = np.asarray(ev.add(0, states[:, 0]), dtype=float)
    gains = np.empty((N, smdp.horizon))
    for h in range(smdp.horizon):
        gains[:, h] = ev.add(h + 1, states[:, h + 1])
    return Batch(states, actions, gains, init, weight)


def with_policy(enum: Batch, policy: Policy) -> Batch:
    """Copy of the enumeration whose weights are full trajectory probabilities under ``policy``."""
    N, H = enum.actions.shape
    prob = enum.weights.copy()
    if H:
        p = prepare(enum, policy).probs.reshape(H, N, -1)
        prob *= np.prod(p[np.arange(H)[:, None], np.arange(N)[None, :], enum.actions.T], axis=0)
    return Batch(enum.states, enum.actions, enum.gains, enum.initial_values, prob)


def exact_J(smdp: Smdp, reward: RewardFn, policy: Policy, enumeration: Batch | None = None) -> float:
    """``J(pi) = sum_tau f(tau; pi) F(tau)`` by full enumeration."""
    enum = enumeration if enumeration is not None else enumerate_trajectories(smdp, reward)
    weighted = with_policy(enum, policy)
    return math.fsum(weighted.weights * weighted.values)


def exact_grad(smdp: Smdp, reward: RewardFn, policy: Policy, enumeration: Batch | None = None) -> np.ndarray:
    """``sum_tau f(tau) (sum_h grad log pi(a_h|s_h)) F(tau)``."""
    enum = enumeration if enumeration is not None else enumerate_trajectories(smdp, reward)
    weighted = with_policy(enum, policy)
    w = np.repeat(weighted.values[:, None], weighted.horizon, axis=1)
    return _score_gradient(weighted, policy, w, None)[0]


def expected_estimate(smdp: Smdp, reward: RewardFn, policy: Policy, baseline=None,
                      estimator: str = "subpo", enumeration: Batch | None = None) -> np.ndarray:
    """Exact expectation of the single-trajectory SubPO/ModPO estimator."""
    enum = enumeration if enumeration is not None else enumerate_trajectories(smdp, reward)
    weighted = with_policy(enum, policy)
    if estimator == "subpo":
        return subpo_gradient(weighted, policy, baseline).grad
    if estimator == "modpo":
        return modpo_gradient(weighted, policy, reward, baseline).grad
    raise ValueError(f"unknown estimator {estimator!r}")


def finite_difference(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return g


def fd_grad_J(smdp, reward, policy: Policy, step: float = 1e-5, enumeration=None) -> np.ndarray:
    enum = enumeration if enumeration is not None else enumerate_trajectories(smdp, reward)
    return finite_difference(lambda th: exact_J(smdp, reward, policy.with_params(th), enum), policy.params, step)


# -- optima ------------------------------------------------------------------


def _require_deterministic(smdp: Smdp) -> int:
    if not smdp.is_deterministic():
        raise ValueError("requires deterministic transitions")
    start = smdp.fixed_start()
    if start is None:
        raise ValueError("requires a fixed initial state")
    return start


def brute_force_opt(smdp: Smdp, reward: RewardFn, limit: int = MAX_TERMS) -> ExactResult:
    """Best action sequence on a deterministic SMDP.

    Searches all ``|A|^H`` sequences; branches reaching the same state with
    the same visited set share one sub-search, which is exact because the
    remaining gains depend on nothing else.
    """
    start = _require_deterministic(smdp)
    H, A = smdp.horizon, smdp.num_actions
    count = A**H
    if count > limit:
        raise SizeRefusal("action-sequence enumeration too large", count, limit)
    succ = smdp.successor_table()
    memo: dict = {}

    def best(h, v, ev, key):
        if h == H:
            return 0.0, []
        k = (h, v, key)
        if k in memo:
            return memo[k]
        top, top_seq = -math.inf, None
        for a in range(A):
            nxt = int(succ[h, v, a])
            child = ev.copy()
            g = child.add(h + 1, nxt)
            nkey = key | {(h + 1, nxt) if reward.time_aware else nxt}
            val, seq = best(h + 1, nxt, child, nkey)
            if g + val > top:
                top, top_seq = g + val, [a] + seq
        memo[k] = (top, top_seq)
        return memo[k]

    ev = reward.evaluator()
    f0 = ev.add(0, start)
    val, seq = best(0, start, ev, frozenset([(0, start) if reward.time_aware else start]))
    return ExactResult(f0 + val, seq, count)


def replay(smdp: Smdp, reward: RewardFn, actions) -> Trajectory:
    """Trajectory of a fixed action sequence on deterministic dynamics."""
    start = _require_deterministic(smdp)
    succ = smdp.successor_table()
    ev = reward.evaluator()
    init = ev.add(0, start)
    v, steps, gains = start, [], []
    for h, a in enumerate(actions):
        steps.append((h, v, int(a)))
        v = int(succ[h, v, a])
        gains.append(ev.add(h + 1, v))
    return Trajectory(steps, v, gains, init)


def greedy_walk(smdp: Smdp, reward: RewardFn) -> Trajectory:
    """Pick the action with the largest marginal gain at each step; ties go to the lowest id."""
    start = _require_deterministic(smdp)
    succ = smdp.successor_table()
    ev = reward.evaluator()
    init = ev.add(0, start)
    v, steps, gains = start, [], []
    for h in range(smdp.horizon):
        cand = [ev.gain(h + 1, int(succ[h, v, a])) for a in range(smdp.num_actions)]
        a = cand.index(max(cand))
        steps.append((h, v, a))
        v = int(succ[h, v, a])
        gains.append(ev.add(h + 1, v))
    return Trajectory(steps, v, gains, init)


# -- set-function checks -------------------------------------------------------


def _random_chain(rng, ground: np.ndarray):
    v = int(rng.choice(ground))
    rest = ground[ground != v]
    B = rest[rng.random(rest.size) < rng.random()]
    A = B[rng.random(B.size) < rng.random()]
    return frozenset(int(x) for x in A), frozenset(int(x) for x in B), v


def check_submodular(reward: RewardFn, ground_set=None, samples: int = 10_000, tol: float = 1e-10,
                     rng=None) -> Verdict:
    """Random ``A <= B``, ``v not in B`` triples; fails iff some ``D(v|A) - D(v|B) < -tol``."""
    rng = np.random.default_rng(rng)
    ground = np.arange(reward.num_states) if ground_set is None else np.asarray(sorted(ground_set))
    worst, witness = 0.0, None
    for _ in range(samples):
        A, B, v = _random_chain(rng, ground)
        margin = (reward.value(A | {v}) - reward.value(A)) - (reward.value(B | {v}) - reward.value(B))
        if -margin > worst:
            worst = -margin
            witness = {"A": sorted(A), "B": sorted(B), "v": v, "margin": margin}
    passed = worst <= tol
    return Verdict("submodularity", passed, worst, None if passed else witness, {"samples": samples})


def check_monotone(reward: RewardFn, ground_set=None, samples: int = 10_000, tol: float = 1e-10,
                   rng=None) -> Verdict:
    rng = np.random.default_rng(rng)
    ground = np.arange(reward.num_states) if ground_set is None else np.asarray(sorted(ground_set))
    worst, witness = 0.0, None
    for _ in range(samples):
        A, _, v = _random_chain(rng, ground)
        gain = reward.value(A | {v}) - reward.value(A)
        if -gain > worst:
            worst, witness = -gain, {"A": sorted(A), "v": v, "gain": gain}
    passed = worst <= tol
    return Verdict("monotonicity", passed, worst, None if passed else witness, {"samples": samples})


def curvature(reward: RewardFn, ground_set=None) -> float:
    """``c = 1 - min_s D(s | S - {s}) / F({s})`` over ``s`` with ``F({s}) > 0``.

    By submodularity the full complement is the worst context, so this is
    exact with ``|S|`` evaluations.
    """
    ground = frozenset(range(reward.num_states)) if ground_set is None else frozenset(int(v) for v in ground_set)
    full = reward.value(ground)
    ratios = []
    for s in sorted(ground):
        single = reward.value(frozenset([s]))
        if single > 0:
            ratios.append((full - reward.value(ground - {s})) / single)
    if not ratios:
        raise ValueError("curvature undefined: every singleton has zero value")
    return float(min(1.0, max(0.0, 1.0 - min(ratios))))


# -- epsilon-bandit DR-submodularity -----------------------------------------------


def loop_policy(x: np.ndarray) -> ProbabilityTable:
    """State-independent bandit policy with the self-loop reparameterised away.

    ``x[h, a]`` is the probability of action ``a`` at step ``h`` in every state
    where ``a`` is not the self-loop; in state ``v`` the loop action ``a_v``
    takes the remaining mass ``1 - sum_{a != v} x[h, a]``.
    """
    x = np.asarray(x, dtype=float)
    H, A = x.shape
    if np.any(x < 0):
        raise ValueError("infeasible policy point: negative coordinate")
    table = np.broadcast_to(x[:, None, :], (H, A, A)).copy()
    loop = 1.0 - (x.sum(axis=1)[:, None] - x)  # loop[h, v] = 1 - sum_{a != v} x[h, a]
    if np.any(loop < 0):
        raise ValueError("infeasible policy point: sum of non-loop probabilities exceeds 1")
    idx = np.arange(A)
    table[:, idx, idx] = loop
    return ProbabilityTable(table)


def is_state_independent(smdp: Smdp) -> bool:
    P = smdp.transition
    return bool(np.allclose(P, P[:, :1], atol=0, rtol=0))


def dr_check(smdp: Smdp, reward: RewardFn, x: np.ndarray, fd_step: float = 1e-3, tol: float = 1e-6,
             enumeration: Batch | None = None) -> Verdict:
    """Finite-difference monotonicity and DR-submodularity of ``J`` at ``x``.

    ``J`` is multilinear in the per-step coordinates, so the four-point mixed
    difference is exact for any step; a step well above ``1e-5`` keeps
    round-off far below ``tol``.
    """
    if smdp.num_actions != smdp.num_states or not is_state_independent(smdp):
        raise ValueError("dr_check needs an epsilon-bandit (state-independent, one action per state)")
    x = np.asarray(x, dtype=float)
    enum = enumeration if enumeration is not None else enumerate_trajectories(smdp, reward)
    flat = x.ravel()
    for sign in (-1, 1):  # whole stencil must stay feasible
        loop_policy(np.clip(x + sign * fd_step, 0, None))
    if np.any(flat - fd_step < 0):
        raise ValueError("infeasible policy point: too close to the boundary for the stencil")

    def J(z):
        return exact_J(smdp, reward, loop_policy(z.reshape(x.shape)), enum)

    n = flat.size
    first = finite_difference(J, flat, fd_step)
    cross = np.zeros((n, n))
    s = fd_step
    for i, j in itertools.combinations(range(n), 2):
        e_i, e_j = np.zeros(n), np.zeros(n)
        e_i[i], e_j[j] = s, s
        val = (J(flat + e_i + e_j) - J(flat + e_i - e_j) - J(flat - e_i + e_j) + J(flat - e_i - e_j)) / (4 * s * s)
        cross[i, j] = cross[j, i] = val
    min_first = float(first.min())
    iu = np.triu_indices(n, 1)
    max_cross = float(cross[iu].max()) if n > 1 else -math.inf
    violation = max(0.0, -min_first, max_cross)
    passed = min_first >= -tol and max_cross <= tol
    witness = None
    if not passed:
        k = int(np.argmax(cross[iu])) if max_cross > tol else None
        witness = {
            "first_partial_min": min_first,
            "first_partial_argmin": int(first.argmin()),
            "cross_max": max_cross,
            "cross_argmax": None if k is None else [int(iu[0][k]), int(iu[1][k])],
        }
    return Verdict("dr_check", passed, violation, witness,
                   {"min_first_partial": min_first, "max_cross_partial": max_cross})


def random_interior_point(rng, horizon: int, num_states: int, margin: float = 0.01) -> np.ndarray:
    """Strictly feasible ``x`` with every coordinate and every loop probability at least ``margin``."""
    rng = np.random.default_rng(rng)
    x = rng.dirichlet(np.ones(num_states + 1), size=horizon)[:, :num_states]
    return margin + (1.0 - (num_states + 1) * margin) * x


# -- Markovian optimality ---------------------------------------------------------


def markovian_optimality_check(smdp: Smdp, reward: RewardFn, n_random: int = 100, rng=None,
                               tol: float = 1e-12, limit: int = MAX_TERMS) -> Verdict:
    """Best deterministic time-augmented Markovian policy vs random stochastic ones (and OPT).

    On a deterministic SMDP with a fixed start the best deterministic
    Markovian value must also equal :func:`brute_force_opt`.
    """
    H, V, A = smdp.horizon, smdp.num_states, smdp.num_actions
    count = A ** (V * H)
    if count > limit:
        raise SizeRefusal("deterministic Markovian policy enumeration too large", count, limit)
    enum = enumerate_trajectories(smdp, reward, limit)
    rng = np.random.default_rng(rng)
    best_det = -math.inf
    eye = np.eye(A)
    for choice in itertools.product(range(A), repeat=V * H):
        table = eye[np.array(choice, dtype=np.int64)].reshape(H, V, A)
        best_det = max(best_det, exact_J(smdp, reward, ProbabilityTable(table), enum))
    best_rand = -math.inf
    for _ in range(n_random):
        table = rng.dirichlet(np.ones(A), size=(H, V))
        best_rand = max(best_rand, exact_J(smdp, reward, ProbabilityTable(table), enum))
    details = {"best_deterministic": best_det, "best_random": best_rand, "policies": count}
    violation = max(0.0, best_rand - best_det)
    passed = violation <= tol
    if smdp.is_deterministic() and smdp.fixed_start() is not None:
        opt = brute_force_opt(smdp, reward, limit).value
        details["opt"] = opt
        gap = abs(opt - best_det)
        violation = max(violation, gap)
        passed = passed and gap <= tol
    return Verdict("markovian_optimality", passed, violation, None, details)
