"""The SubPO / ModPO training loop."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Smdp, rollout_batch, rollout_streams
from .estimator import BaselineState, entropy_gradient, modpo_gradient, modular_rewards, prepare, returns_to_go, subpo_gradient
from .policies import Policy
from .rewards import RewardFn, modularize

EVAL_STREAM = 2**32 - 1  # epoch key reserved for evaluation rollouts
CURVE_HEADER = ("epoch", "mean_J", "std_J", "mean_entropy", "ms")


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, epoch: int, diagnostics: dict):
        super().__init__(f"non-finite gradient at epoch {epoch}: {diagnostics}")
        self.epoch = epoch
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    entropy_coef: float = 0.0
    estimator: str = "subpo"
    seed: int = 0
    baseline_decay: float | None = 0.9
    dump_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.estimator not in ("subpo", "modpo"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.entropy_coef < 0:
            raise ValueError("entropy coefficient must be nonnegative")
        self.betas = tuple(self.betas)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta + self.lr * grad


class Adam:
    """Adam for gradient *ascent* with bias-corrected moments."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.eps = lr, eps
        self.b1, self.b2 = betas
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m, self.v = np.zeros_like(theta), np.zeros_like(theta)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return theta + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(config.lr)
    return Adam(config.lr, config.betas, config.eps)


def gradient_step(theta: np.ndarray, grad: np.ndarray, optimizer, lr: float | None = None) -> np.ndarray:
    if theta.shape != grad.shape:
        raise ValueError(f"parameter shape {theta.shape} != gradient shape {grad.shape}")
    if lr is not None:
        optimizer.lr = lr
    return optimizer.step(theta, grad)


@dataclass
class LearningCurve:
    rows: list = field(default_factory=list)

    def append(self, epoch, mean_J, std_J, mean_entropy, ms):
        self.rows.append((int(epoch), float(mean_J), float(std_J), float(mean_entropy), float(ms)))

    def __len__(self):
        return len(self.rows)

    @property
    def mean_J(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self, path=None, timing: bool = True) -> str:
        """CSV text (also written to ``path``).  ``timing=False`` drops the wall-clock column."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = CURVE_HEADER if timing else CURVE_HEADER[:-1]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r[0]] + [repr(x) for x in r[1 : len(cols)]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "LearningCurve":
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        curve = cls()
        for r in rows:
            curve.append(r["epoch"], r["mean_J"], r["std_J"], r["mean_entropy"], r.get("ms", 0.0))
        return curve


def train(smdp: Smdp, reward: RewardFn, policy: Policy, config: TrainConfig, callback=None):
    """Run ``epochs`` rounds of ``batch_size`` rollouts, one ascent step each.

    The logged ``mean_J`` is the batch mean of the true objective ``F``
    (whatever the estimator optimises) under the pre-update parameters.
    """
    policy = policy.with_params(policy.params)
    opt = make_optimizer(config)
    baseline = BaselineState(smdp.horizon, config.baseline_decay)
    surrogate = modularize(reward).state_reward if config.estimator == "modpo" else None
    curve = LearningCurve()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        batch = rollout_batch(smdp, reward, policy, rollout_streams(config.seed, epoch, config.batch_size))
        steps = prepare(batch, policy)
        if surrogate is None:
            est = subpo_gradient(batch, policy, baseline, steps)
            rtg = returns_to_go(batch.gains)
        else:
            est = modpo_gradient(batch, policy, surrogate, baseline, steps)
            rtg = returns_to_go(modular_rewards(batch, surrogate))
        grad = est.grad
        if config.entropy_coef > 0:
            grad = grad + entropy_gradient(batch, policy, config.entropy_coef, steps).grad
        if not np.all(np.isfinite(grad)):
            _abort(epoch, policy, grad, batch, config)
        baseline.update(rtg)
        policy.params = gradient_step(policy.params, grad, opt)
        vals = batch.values
        curve.append(epoch, vals.mean(), vals.std(), est.mean_entropy, 1e3 * (time.perf_counter() - t0))
        if callback is not None:
            callback(epoch, policy, curve)
    return policy, curve


def _abort(epoch, policy, grad, batch, config):
    diag = {
        "nonfinite_entries": int((~np.isfinite(grad)).sum()),
        "param_norm": float(np.linalg.norm(policy.params)),
        "params_finite": bool(np.all(np.isfinite(policy.params))),
        "max_abs_gain": float(np.abs(batch.gains).max()) if batch.gains.size else 0.0,
        "seed": config.seed,
    }
    if config.dump_dir:
        d = Path(config.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        np.savez(d / f"nonfinite_epoch{epoch}.npz", params=policy.params, grad=grad,
                 states=batch.states, actions=batch.actions, gains=batch.gains)
        (d / f"nonfinite_epoch{epoch}.json").write_text(json.dumps({**diag, "config": asdict(config)}, default=str))
    raise NonFiniteGradientError(epoch, diag)


def evaluate_policy(smdp: Smdp, reward: RewardFn, policy: Policy, episodes: int, seed: int,
                    chunk: int = 1024) -> np.ndarray:
    """Objective values of ``episodes`` fresh rollouts on the reserved evaluation streams."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    out = []
    for start in range(0, episodes, chunk):
        n = min(chunk, episodes - start)
        rngs = rollout_streams(seed, EVAL_STREAM, n, offset=start)
        out.append(rollout_batch(smdp, reward, policy, rngs).values)
    return np.concatenate(out)
