import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subrl.core import ConfigurationError
from subrl.oracle import finite_difference
from subrl.policies import (MlpPolicy, ObservationSpec, ProbabilityTable, TabularSoftmax, entropy,
                            entropy_dlogits, load_policy, make_policy, softmax)


def log_prob(policy, obs, a):
    return math.log(policy.action_distribution(obs)[a])


def fd_check(policy, obs, a, rtol=1e-5, atol=1e-8):
    analytic = policy.grad_log_prob(obs, a)
    numeric = finite_difference(lambda th: log_prob(policy.with_params(th), obs, a), policy.params, 1e-6)
    assert np.allclose(analytic, numeric, rtol=rtol, atol=atol)


def test_zero_params_uniform():
    pol = TabularSoftmax(4, 5, 3)
    assert np.array_equal(pol.action_distribution(pol.observe([0, 2], 1)), np.full(5, 0.2))


def test_softmax_arithmetic():
    p = softmax(np.array([1.0, 0.0]))
    assert np.allclose(p, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-15)
    assert abs(p[0] - 0.7311) < 1e-4


def test_softmax_extreme_logits():
    p = softmax(np.array([[1000.0, 0.0, -1000.0]]))
    assert np.all(np.isfinite(p)) and p[0, 0] == 1.0


def test_tabular_grad_equal_logits():
    pol = TabularSoftmax(1, 2, 1)
    assert np.allclose(pol.grad_log_prob(0, 0), [0.5, -0.5])


def test_single_action_zero_grad():
    pol = TabularSoftmax(3, 1, 2, params=np.arange(6.0))
    assert np.all(pol.grad_log_prob(pol.observe([0, 1]), 0) == 0)
    mlp = MlpPolicy(3, 1, 2, hidden=(4, 4), seed=0)
    assert np.allclose(mlp.grad_log_prob(mlp.observe([0, 1]), 0), 0, atol=1e-15)


def test_mlp_2x8_matches_fd(rng):
    pol = MlpPolicy(5, 4, 3, hidden=(8, 8), seed=1)
    pol = pol.with_params(pol.params + 0.3 * rng.normal(size=pol.num_params))
    for h in range(3):
        prefix = rng.integers(0, 5, size=h + 1)
        fd_check(pol, pol.observe(prefix), int(rng.integers(4)))


@pytest.mark.parametrize("spec", ["tabular", "mlp", "history:2", "history:H"])
def test_gradient_check_100_configs(spec):
    rng = np.random.default_rng(hash(spec) % 2**32)
    for _ in range(100):
        V, A, H = (int(x) for x in rng.integers(2, 5, size=3))
        pol = make_policy(spec, V, A, H, seed=int(rng.integers(1000)), hidden=(6, 5))
        pol = pol.with_params(pol.params + 0.5 * rng.normal(size=pol.num_params))
        h = int(rng.integers(H))
        fd_check(pol, pol.observe(rng.integers(0, V, size=h + 1)), int(rng.integers(A)))


def test_degenerate_distribution_always_zero(rng):
    pol = ProbabilityTable(np.array([[[1.0, 0.0, 0.0]]]))
    assert all(pol.sample_action(0, rng) == 0 for _ in range(1000))


def test_uniform_frequencies():
    pol = TabularSoftmax(1, 5, 1)
    rng = np.random.default_rng(0)
    n = 100_000
    draws = np.array([pol.sample_action(0, rng) for _ in range(n)])
    freq = np.bincount(draws, minlength=5) / n
    assert np.all(np.abs(freq - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / n))


def test_seeded_sampling_reproducible():
    pol = TabularSoftmax(1, 5, 1, params=np.arange(5.0) / 3)
    a = [pol.sample_action(0, np.random.default_rng(4)) for _ in range(3)]
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [pol.sample_action(0, r1) for _ in range(50)] == [pol.sample_action(0, r2) for _ in range(50)]
    assert len(set(a)) == 1


def test_history_k1_equals_markovian_mlp(rng):
    a = MlpPolicy(6, 5, 4, hidden=(7, 3), seed=2)
    b = MlpPolicy(6, 5, 4, hidden=(7, 3), obs_spec=ObservationSpec("history_window", 1), params=a.params)
    for h in range(4):
        prefix = rng.integers(0, 6, size=(10, h + 1))
        assert np.array_equal(a.observe_batch(prefix, h), b.observe_batch(prefix, h))
        assert np.array_equal(a.probs(a.observe_batch(prefix, h)), b.probs(b.observe_batch(prefix, h)))


def test_history_window_layout():
    spec = ObservationSpec("history_window", 3)
    f = spec.features(np.array([[2, 0]]), 1, 4, 5)[0]
    assert f.size == 3 * 4 + 1
    assert np.array_equal(f[:4], np.zeros(4))  # before the episode start
    assert f[4 + 2] == 1 and f[8 + 0] == 1
    assert f[-1] == pytest.approx(1 / 5)


def test_entropy_gradient_formula():
    z = np.array([1.0, 0.0, -0.5])
    num = finite_difference(lambda x: entropy(softmax(x)), z, 1e-6)
    assert np.allclose(entropy_dlogits(softmax(z)), num, atol=1e-9)


@pytest.mark.parametrize("spec", ["tabular", "mlp", "history:3"])
def test_checkpoint_round_trip(tmp_path, spec):
    pol = make_policy(spec, 4, 3, 5, seed=3, hidden=(5, 6))
    pol = pol.with_params(pol.params + 0.1)
    pol.save(tmp_path / "ckpt")
    back = load_policy(tmp_path / "ckpt")
    assert np.array_equal(back.params, pol.params)
    assert back.header() == pol.header()


def test_checkpoint_size_mismatch(tmp_path):
    pol = TabularSoftmax(2, 2, 2)
    pol.save(tmp_path / "c")
    np.zeros(3).astype("<f8").tofile(tmp_path / "c.bin")
    with pytest.raises(ConfigurationError):
        load_policy(tmp_path / "c")


def test_wrong_observation_length():
    pol = MlpPolicy(3, 2, 2, hidden=(4, 4))
    with pytest.raises(ConfigurationError):
        pol.logits(np.zeros((1, 7)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_probs_form_simplex(logits):
    p = softmax(np.array(logits))
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12


def test_entropy_with_underflowed_probabilities():
    p = softmax(np.array([[800.0, 0.0, -5.0]]))
    assert p[0, 1] == 0.0
    assert entropy(p)[0] == 0.0
    assert np.all(np.isfinite(entropy_dlogits(p)))
