import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import four_rewards, random_smdp
from subrl.core import SizeRefusal, Smdp, rollout_batch, rollout_streams
from subrl.envs import EpsilonBanditSpec, GridSpec, build_epsilon_bandit, build_grid
from subrl.gp import GpParams
from subrl.oracle import (brute_force_opt, check_monotone, check_submodular, curvature, dr_check,
                          enumerate_trajectories, exact_grad, exact_J, expected_estimate, fd_grad_J, greedy_walk,
                          loop_policy, markovian_optimality_check, random_interior_point, replay)
from subrl.policies import ProbabilityTable, TabularSoftmax
from subrl.rewards import GpMutualInformation, Modular, SetFunction, WeightedCoverage


def line(width, H, start, dens, r=0):
    smdp = build_grid(GridSpec(width, 1, H, start=(start, 0)))
    return smdp, WeightedCoverage(width, 1, np.asarray(dens, dtype=float).reshape(1, width), r)


# -- exact J and gradients ---------------------------------------------------------


def test_exact_J_deterministic_policy(grid5):
    R = WeightedCoverage(5, 5, np.ones((5, 5)), 1)
    acts = [0, 1, 0, 1, 4, 2]
    table = np.zeros((6, 25, 5))
    table[np.arange(6), :, acts] = 1.0
    assert exact_J(grid5, R, ProbabilityTable(table)) == replay(grid5, R, acts).value


def test_exact_J_hand_enumeration():
    P = np.zeros((1, 2, 1, 2))
    P[0, 0, 0] = [0.3, 0.7]
    P[0, 1, 0] = [0.0, 1.0]
    smdp = Smdp(2, 1, 1, np.array([1.0, 0.0]), P)
    R = Modular([1.0, 2.0])
    assert exact_J(smdp, R, TabularSoftmax(2, 1, 1)) == pytest.approx(0.3 * 1.0 + 0.7 * 3.0, abs=1e-15)


def test_exact_J_matches_monte_carlo(rng):
    smdp = random_smdp(rng, V=4, A=3, H=3)
    R = four_rewards(4)["coverage"]
    pol = TabularSoftmax(4, 3, 3, params=rng.normal(size=36))
    vals = rollout_batch(smdp, R, pol, rollout_streams(0, 0, 100_000)).values
    assert abs(vals.mean() - exact_J(smdp, R, pol)) <= 3 * vals.std() / math.sqrt(vals.size)


def test_exact_grad_symmetry():
    smdp = build_epsilon_bandit(EpsilonBanditSpec(3, 2, 0.2))
    g = exact_grad(smdp, Modular(np.ones(3)), TabularSoftmax(3, 3, 2)).reshape(2, 3, 3)
    eye = np.eye(3, dtype=bool)
    for h in range(2):
        assert np.ptp(g[h][eye]) < 1e-14 and np.ptp(g[h][~eye]) < 1e-14


def test_exact_grad_vs_fd_on_50_instances():
    rng = np.random.default_rng(50)
    kinds = list(four_rewards(3))
    for i in range(50):
        smdp = random_smdp(rng, V=3, A=2, H=2, deterministic=bool(i % 3 == 0))
        R = four_rewards(3, seed=i)[kinds[i % 4]]
        pol = TabularSoftmax(3, 2, 2, params=rng.normal(size=12))
        enum = enumerate_trajectories(smdp, R)
        g = exact_grad(smdp, R, pol, enum)
        assert np.max(np.abs(g - fd_grad_J(smdp, R, pol, enumeration=enum))) <= 1e-6
        assert np.max(np.abs(g - expected_estimate(smdp, R, pol, enumeration=enum))) <= 1e-9


def test_enumeration_refuses_large():
    smdp = build_grid(GridSpec(5, 5, 11))  # 5**11 action sequences
    with pytest.raises(SizeRefusal) as err:
        enumerate_trajectories(smdp, Modular(np.ones(25)))
    assert err.value.terms > err.value.limit


# -- brute force and greedy ------------------------------------------------------


def test_brute_force_h1():
    smdp, R = line(5, 1, 2, [0, 3, 0, 5, 0])
    res = brute_force_opt(smdp, R)
    assert res.value == 5 and res.argmax == [0]


def test_brute_force_3x3_h4_r0():
    smdp = build_grid(GridSpec(3, 3, 4))
    res = brute_force_opt(smdp, WeightedCoverage(3, 3, np.ones((3, 3)), 0))
    assert res.value == 5
    assert len(set(replay(smdp, WeightedCoverage(3, 3, np.ones((3, 3)), 0), res.argmax).states)) == 5


def independent_opt(smdp, R):
    """Plain enumeration of all action sequences, no memo."""
    best = -1.0
    for seq in itertools.product(range(smdp.num_actions), repeat=smdp.horizon):
        best = max(best, R.evaluate(replay(smdp, R, seq).states))
    return best


def test_modular_constant_opt_is_h_plus_1():
    smdp = build_grid(GridSpec(3, 3, 5, start=(1, 1)))
    R = Modular(np.ones(9))
    assert brute_force_opt(smdp, R).value == 6 == independent_opt(smdp, R)


def test_brute_force_matches_plain_enumeration(rng):
    for seed in range(15):
        smdp = random_smdp(seed, V=5, A=3, H=4, deterministic=True, fixed_start=True)
        R = list(four_rewards(5, seed=seed).values())[seed % 4]
        assert brute_force_opt(smdp, R).value == pytest.approx(independent_opt(smdp, R), abs=1e-12)


def test_brute_force_requires_deterministic(tiny):
    with pytest.raises(ValueError):
        brute_force_opt(tiny, Modular(np.ones(3)))


def test_greedy_on_modular_is_stepwise_argmax():
    smdp, _ = line(5, 2, 2, np.zeros(5))
    R = Modular([0.0, 4.0, 0.0, 1.0, 9.0])
    traj = greedy_walk(smdp, R)
    assert traj.actions == [2, 0]  # left to 4.0, then the best neighbour of cell 1 is cell 2 (0) vs 0 (0): tie -> right
    assert traj.value == 4.0


def test_greedy_suboptimal_two_clusters():
    smdp, R = line(7, 4, 2, [0, 1, 0, 0, 0, 10, 10])
    g = greedy_walk(smdp, R).value
    opt = brute_force_opt(smdp, R).value
    assert (g, opt) == (1.0, 20.0)
    assert g / opt < 1


def test_greedy_revisit_corridor_tie_rule():
    smdp, R = line(3, 4, 0, np.ones(3))
    traj = greedy_walk(smdp, R)
    assert traj.marginal_gains == [1.0, 1.0, 0.0, 0.0]
    assert traj.actions == [0, 0, 0, 0]  # zero-gain steps take action 0 (blocked: stay)
    assert traj.states == [0, 1, 2, 2, 2]


# -- set-function checks ---------------------------------------------------------


def test_submodularity_verdicts():
    assert check_submodular(Modular(np.arange(6.0))).passed
    cov = WeightedCoverage(4, 4, np.random.default_rng(0).uniform(size=(4, 4)), 1)
    assert check_submodular(cov, tol=1e-8).passed
    assert check_submodular(GpMutualInformation(GpParams.grid(4, 4)), tol=1e-8).passed
    bad = check_submodular(SetFunction(lambda S: len(S) ** 2, 6), rng=0)
    assert not bad.passed and bad.witness is not None
    A, B, v = set(bad.witness["A"]), set(bad.witness["B"]), bad.witness["v"]
    assert A <= B and v not in B
    assert (len(A) + 1) ** 2 - len(A) ** 2 < (len(B) + 1) ** 2 - len(B) ** 2
    assert bad.to_json()["pass"] is False


def test_monotone_verdict_catches_decrease():
    assert not check_monotone(SetFunction(lambda S: -len(S), 4), rng=0).passed


def exhaustive_curvature(R, ground):
    ratios = []
    for s in ground:
        rest = [u for u in ground if u != s]
        single = R.value(frozenset([s]))
        for k in range(len(rest) + 1):
            for S in itertools.combinations(rest, k):
                S = frozenset(S)
                ratios.append((R.value(S | {s}) - R.value(S)) / single)
    return 1 - min(ratios)


def test_curvature_cases():
    assert curvature(Modular([1.0, 2.0, 3.0])) == 0.0
    assert curvature(SetFunction(lambda S: float(bool(S)), 4)) == 1.0
    # six cells on a 1 x 12 line whose radius-1 patches overlap pairwise
    R = WeightedCoverage(12, 1, np.arange(1.0, 13.0).reshape(1, 12), footprint_radius=1)
    ground = [0, 2, 4, 6, 8, 10]
    c = curvature(R, ground)
    assert c == pytest.approx(exhaustive_curvature(R, ground), abs=1e-12)
    assert 0 < c < 1


# -- DR-submodularity ------------------------------------------------------------


def test_dr_check_cases():
    x = np.full((2, 3), 0.25)  # uniform interior point; every loop probability is 0.5
    for eps in (0.1, 0.0):
        smdp = build_epsilon_bandit(EpsilonBanditSpec(3, 2, eps))
        R = WeightedCoverage(3, 1, np.array([[1.0, 2.0, 0.5]]), footprint_radius=1)
        v = dr_check(smdp, R, x)
        assert v.passed, v.to_json()
    v = dr_check(build_epsilon_bandit(EpsilonBanditSpec(3, 2, 0.1)), Modular([1.0, 2.0, 3.0]), x)
    assert v.passed and v.details["max_cross_partial"] <= 1e-6


def test_loop_policy_rows():
    x = np.array([[0.2, 0.3, 0.1]])
    table = loop_policy(x).params.reshape(1, 3, 3)
    assert np.allclose(table[0, 0], [0.6, 0.3, 0.1])
    assert np.allclose(table[0].sum(axis=1), 1)
    with pytest.raises(ValueError):
        loop_policy(np.array([[0.6, 0.6, 0.0]]))


def test_dr_check_rejects_non_bandit(grid5):
    with pytest.raises(ValueError):
        dr_check(grid5, Modular(np.ones(25)), np.full((6, 25), 0.01))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_random_interior_point_feasible(seed):
    x = random_interior_point(seed, 2, 3)
    table = loop_policy(x).params
    assert np.all(x >= 0.01 - 1e-15) and np.all(table >= 0.01 - 1e-12)


# -- Markovian optimality --------------------------------------------------------


def test_markovian_deterministic_two_state():
    P = np.zeros((2, 2, 2, 2))
    P[:, :, 0, 0] = 1
    P[:, :, 1, 1] = 1
    smdp = Smdp(2, 2, 2, np.array([1.0, 0.0]), P)
    v = markovian_optimality_check(smdp, Modular([1.0, 3.0]), rng=0)
    assert v.passed and v.details["opt"] == v.details["best_deterministic"] == 4.0


def test_markovian_stochastic_two_state(rng):
    smdp = random_smdp(rng, V=2, A=2, H=2)
    v = markovian_optimality_check(smdp, WeightedCoverage(2, 1, np.array([[1.0, 2.0]]), 0), rng=1)
    assert v.passed and v.details["best_deterministic"] >= v.details["best_random"]


def test_markovian_single_action(rng):
    smdp = random_smdp(rng, V=3, A=1, H=2)
    R = four_rewards(3)["mi"]
    v = markovian_optimality_check(smdp, R, rng=0)
    assert v.passed
    assert v.details["best_random"] == pytest.approx(v.details["best_deterministic"], abs=1e-15)
