import json

import numpy as np
import pytest

from subrl.core import rollout_batch, rollout_streams
from subrl.envs import GridSpec, build_grid
from subrl.oracle import brute_force_opt
from subrl.policies import MlpPolicy, TabularSoftmax
from subrl.rewards import WeightedCoverage, zero_reward
from subrl.trainer import (Adam, LearningCurve, NonFiniteGradientError, Sgd, TrainConfig, evaluate_policy,
                           gradient_step, train)


@pytest.fixture
def cov5():
    return WeightedCoverage(5, 5, np.ones((5, 5)), 1)


def test_sgd_steps():
    theta = np.array([0.3, -2.0])
    assert np.array_equal(gradient_step(theta, np.zeros(2), Sgd(0.5)), theta)
    assert np.allclose(gradient_step(np.zeros(2), np.array([1.0, -1.0]), Sgd(0.1)), [0.1, -0.1])


def test_adam_first_step_is_lr():
    # m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
    new = gradient_step(np.array([2.0]), np.array([1.0]), Adam(1e-3))
    assert abs(new[0] - (2.0 + 1e-3)) <= 1e-6


def test_adam_bias_correction_second_step():
    opt = Adam(0.1, (0.9, 0.999), 0.0)
    theta = opt.step(np.zeros(1), np.array([1.0]))
    theta = opt.step(theta, np.array([3.0]))
    m = (0.9 * 0.1 + 0.1 * 3.0) / (1 - 0.81)
    v = (0.999 * 0.001 + 0.001 * 9.0) / (1 - 0.999**2)
    assert theta[0] == pytest.approx(0.1 + 0.1 * m / np.sqrt(v), abs=1e-14)


def test_step_shape_mismatch():
    with pytest.raises(ValueError):
        gradient_step(np.zeros(3), np.zeros(2), Sgd(0.1))


def test_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(lr=0.0), dict(optimizer="rmsprop"),
                dict(estimator="ppo"), dict(entropy_coef=-1.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_zero_reward_keeps_params():
    smdp = build_grid(GridSpec(3, 3, 3))
    pol = TabularSoftmax(9, 5, 3, params=np.random.default_rng(0).normal(size=135))
    new, curve = train(smdp, zero_reward(9), pol, TrainConfig(epochs=20, batch_size=8, lr=0.5))
    assert np.array_equal(new.params, pol.params)
    assert len(curve) == 20


def test_5x5_tabular_reaches_opt(grid5, cov5):
    opt = brute_force_opt(grid5, cov5).value
    _, curve = train(grid5, cov5, TabularSoftmax(25, 5, 6), TrainConfig(epochs=300, batch_size=64, lr=0.1, seed=0))
    assert curve.mean_J[-1] >= 0.95 * opt


def test_monotone_trend(grid5, cov5):
    """Means over consecutive 20-epoch blocks rarely decrease."""
    ups = []
    for seed in range(20):
        _, curve = train(grid5, cov5, TabularSoftmax(25, 5, 6),
                         TrainConfig(epochs=300, batch_size=64, lr=1e-2, seed=seed))
        blocks = curve.mean_J.reshape(-1, 20).mean(axis=1)
        ups.extend(np.diff(blocks) >= 0)
    assert np.mean(ups) >= 0.9


def test_reproducible_curve_bytes(grid5, cov5):
    cfg = TrainConfig(epochs=15, batch_size=16, lr=0.05, seed=3, entropy_coef=0.005)
    p1, c1 = train(grid5, cov5, MlpPolicy(25, 5, 6, (8, 8), seed=1), cfg)
    p2, c2 = train(grid5, cov5, MlpPolicy(25, 5, 6, (8, 8), seed=1), cfg)
    assert c1.to_csv(timing=False).encode() == c2.to_csv(timing=False).encode()
    assert p1.params.tobytes() == p2.params.tobytes()


def test_train_does_not_mutate_input(grid5, cov5):
    pol = TabularSoftmax(25, 5, 6)
    train(grid5, cov5, pol, TrainConfig(epochs=3, batch_size=8, lr=0.1))
    assert np.all(pol.params == 0)


def test_modpo_runs_and_logs_true_objective(grid5, cov5):
    seen = []
    _, curve = train(grid5, cov5, TabularSoftmax(25, 5, 6), TrainConfig(epochs=2, batch_size=8, estimator="modpo"),
                     callback=lambda e, p, c: seen.append(e))
    batch = rollout_batch(grid5, cov5, TabularSoftmax(25, 5, 6), rollout_streams(0, 0, 8))
    assert curve.rows[0][1] == batch.values.mean()
    assert seen == [0, 1]


def test_curve_csv_round_trip(tmp_path, grid5, cov5):
    _, curve = train(grid5, cov5, TabularSoftmax(25, 5, 6), TrainConfig(epochs=4, batch_size=8, lr=0.1))
    curve.to_csv(tmp_path / "c.csv")
    back = LearningCurve.from_csv(tmp_path / "c.csv")
    assert back.rows == curve.rows
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "epoch,mean_J,std_J,mean_entropy,ms"


def test_nonfinite_gradient_aborts_with_dump(tmp_path, grid5, cov5):
    pol = TabularSoftmax(25, 5, 6)
    pol.params[0] = np.nan
    with pytest.raises(NonFiniteGradientError) as err:
        train(grid5, cov5, pol, TrainConfig(epochs=2, batch_size=8, dump_dir=str(tmp_path)))
    assert err.value.epoch == 0
    doc = json.loads((tmp_path / "nonfinite_epoch0.json").read_text())
    assert doc["params_finite"] is False
    assert (tmp_path / "nonfinite_epoch0.npz").exists()


def test_evaluate_policy_chunking(grid5, cov5):
    pol = TabularSoftmax(25, 5, 6, params=np.random.default_rng(2).normal(size=750))
    a = evaluate_policy(grid5, cov5, pol, 100, seed=4, chunk=7)
    b = evaluate_policy(grid5, cov5, pol, 100, seed=4)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        evaluate_policy(grid5, cov5, pol, 0, seed=4)
