"""Softmax policies with hand-written backward passes.

All policies share one batched interface:

* ``observe_batch(prefix, h)`` turns state prefixes ``v_0..v_h`` (an
  ``(N, h+1)`` int array) into observations,
* ``probs(obs)`` gives the ``(N, A)`` action distributions,
* ``backward(obs, dlogits)`` returns ``sum_n J_n^T dlogits_n`` flattened over
  the parameters, from which every score-function gradient is built.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import entr

from .core import ConfigurationError, inverse_cdf


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats; ``0 log 0 = 0`` for underflowed probabilities."""
    return entr(p).sum(axis=-1)


def entropy_dlogits(p: np.ndarray) -> np.ndarray:
    """d H(softmax(z)) / dz = -p * (log p + H)."""
    logp = np.log(np.where(p > 0, p, 1.0))  # p = 0 entries are multiplied by p below
    H = entropy(p)[..., None]
    return -p * (logp + H)


class Policy:
    kind = "abstract"
    params: np.ndarray

    def __init__(self, num_states: int, num_actions: int, horizon: int):
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self.horizon = int(horizon)

    @property
    def num_params(self) -> int:
        return self.params.size

    def observe_batch(self, prefix: np.ndarray, h: int):
        raise NotImplementedError

    def observe(self, prefix, h: int | None = None):
        """Observation for a single prefix ``v_0..v_h``."""
        prefix = np.asarray(prefix, dtype=np.int64).reshape(1, -1)
        return self.observe_batch(prefix, prefix.shape[1] - 1 if h is None else h)[0]

    def logits(self, obs) -> np.ndarray:
        raise NotImplementedError

    def probs(self, obs) -> np.ndarray:
        return softmax(self.logits(obs))

    def backward(self, obs, dlogits: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # single-observation helpers ------------------------------------------------

    def _one(self, obs):
        return np.asarray(obs)[None]

    def action_distribution(self, obs) -> np.ndarray:
        return self.probs(self._one(obs))[0]

    def grad_log_prob(self, obs, action: int) -> np.ndarray:
        obs1 = self._one(obs)
        p = self.probs(obs1)
        d = -p
        d[0, int(action)] += 1.0
        return self.backward(obs1, d)

    def sample_action(self, obs, rng: np.random.Generator) -> int:
        return int(inverse_cdf(self.action_distribution(obs)[None], np.array([rng.random()]))[0])

    def with_params(self, params) -> "Policy":
        new = self._clone()
        new.params = np.array(params, dtype=float)
        if new.params.shape != self.params.shape:
            raise ConfigurationError(f"expected {self.params.shape} parameters, got {new.params.shape}")
        return new

    def _clone(self) -> "Policy":
        raise NotImplementedError

    # checkpoints -------------------------------------------------------------

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "num_params": self.num_params,
        }

    def save(self, path) -> None:
        """Write ``<path>.bin`` (little-endian float64 parameters) and ``<path>.json`` (header)."""
        path = Path(path)
        self.params.astype("<f8").tofile(path.with_suffix(".bin"))
        path.with_suffix(".json").write_text(json.dumps(self.header(), indent=2))


class TabularSoftmax(Policy):
    """Independent logits per time-augmented state ``(h, v)``.

    Observations are the integer cell ``h * V + v`` (or ``v`` when
    ``time_indexed`` is false).
    """

    kind = "tabular_softmax"

    def __init__(self, num_states, num_actions, horizon, time_indexed: bool = True, params=None):
        super().__init__(num_states, num_actions, horizon)
        self.time_indexed = time_indexed
        rows = (max(horizon, 1) if time_indexed else 1) * self.num_states
        self.params = np.zeros(rows * self.num_actions) if params is None else np.array(params, dtype=float)
        if self.params.size != rows * self.num_actions:
            raise ConfigurationError("tabular parameter vector has the wrong length")

    @property
    def table(self) -> np.ndarray:
        return self.params.reshape(-1, self.num_actions)

    def observe_batch(self, prefix, h):
        v = prefix[:, h]
        return h * self.num_states + v if self.time_indexed else v.copy()

    def _one(self, obs):
        return np.array([int(obs)])

    def logits(self, obs):
        obs = np.asarray(obs, dtype=np.int64)
        if obs.ndim != 1 or (obs.size and (obs.min() < 0 or obs.max() >= self.table.shape[0])):
            raise ConfigurationError("tabular observation out of range")
        return self.table[obs]

    def backward(self, obs, dlogits):
        g = np.zeros_like(self.table)
        np.add.at(g, np.asarray(obs, dtype=np.int64), dlogits)
        return g.ravel()

    def _clone(self):
        return TabularSoftmax(self.num_states, self.num_actions, self.horizon, self.time_indexed, self.params.copy())

    def header(self):
        return {**super().header(), "arch": {"time_indexed": self.time_indexed}}


class ProbabilityTable(Policy):
    """Markovian policy given directly as probabilities ``pi[h, v, a]`` (no gradient)."""

    kind = "probability_table"

    def __init__(self, table):
        table = np.asarray(table, dtype=float)
        H, V, A = table.shape
        super().__init__(V, A, H)
        self.params = table.ravel().copy()

    def observe_batch(self, prefix, h):
        return h * self.num_states + prefix[:, h]

    def _one(self, obs):
        return np.array([int(obs)])

    def probs(self, obs):
        return self.params.reshape(-1, self.num_actions)[np.asarray(obs, dtype=np.int64)]

    def logits(self, obs):
        with np.errstate(divide="ignore"):
            return np.log(self.probs(obs))

    def _clone(self):
        return ProbabilityTable(self.params.reshape(self.horizon, self.num_states, self.num_actions))


@dataclass(frozen=True)
class ObservationSpec:
    """Features fed to an MLP policy.

    ``one_hot_state_time``: one-hot ``v_h`` plus the scalar ``h / H``.
    ``one_hot_state_only``: one-hot ``v_h``.
    ``history_window``: one-hot ``v_{h-k+1} .. v_h`` (oldest first, zero blocks
    before the episode start) plus ``h / H``; with ``k = 1`` this is exactly
    ``one_hot_state_time``.
    """

    kind: str = "one_hot_state_time"
    window: int = 1

    def __post_init__(self):
        if self.kind not in ("one_hot_state_time", "one_hot_state_only", "history_window"):
            raise ConfigurationError(f"unknown observation kind {self.kind!r}")
        if self.window < 1:
            raise ConfigurationError("history window must be >= 1")

    def length(self, num_states: int) -> int:
        if self.kind == "one_hot_state_only":
            return num_states
        k = self.window if self.kind == "history_window" else 1
        return k * num_states + 1

    def features(self, prefix: np.ndarray, h: int, num_states: int, horizon: int) -> np.ndarray:
        N = prefix.shape[0]
        out = np.zeros((N, self.length(num_states)))
        rows = np.arange(N)
        if self.kind == "one_hot_state_only":
            out[rows, prefix[:, h]] = 1.0
            return out
        k = self.window if self.kind == "history_window" else 1
        for slot in range(k):
            t = h - (k - 1) + slot
            if t >= 0:
                out[rows, slot * num_states + prefix[:, t]] = 1.0
        out[:, -1] = h / max(horizon, 1)
        return out


class MlpPolicy(Policy):
    """Two ReLU hidden layers and linear logits."""

    def __init__(self, num_states, num_actions, horizon, hidden=(64, 64),
                 obs_spec: ObservationSpec | None = None, seed: int = 0, params=None):
        super().__init__(num_states, num_actions, horizon)
        if len(hidden) != 2:
            raise ConfigurationError("MLP policy has exactly two hidden layers")
        self.hidden = tuple(int(w) for w in hidden)
        self.obs_spec = obs_spec or ObservationSpec()
        d = self.obs_spec.length(self.num_states)
        w1, w2 = self.hidden
        self.shapes = [(d, w1), (w1,), (w1, w2), (w2,), (w2, self.num_actions), (self.num_actions,)]
        if params is None:
            rng = np.random.default_rng(seed)
            chunks = []
            for shape in self.shapes:
                if len(shape) == 2:
                    bound = 1.0 / np.sqrt(shape[0])
                    chunks.append(rng.uniform(-bound, bound, size=shape).ravel())
                else:
                    chunks.append(np.zeros(shape))
            params = np.concatenate(chunks)
        self.params = np.array(params, dtype=float)
        if self.params.size != self.param_count(d, self.hidden, self.num_actions):
            raise ConfigurationError("MLP parameter vector has the wrong length")

    @staticmethod
    def param_count(input_len: int, hidden, num_actions: int) -> int:
        w1, w2 = hidden
        return input_len * w1 + w1 + w1 * w2 + w2 + w2 * num_actions + num_actions

    @property
    def kind(self):
        return "history_mlp" if self.obs_spec.kind == "history_window" else "mlp"

    def _unpack(self, flat):
        out, i = [], 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            out.append(flat[i : i + n].reshape(shape))
            i += n
        return out

    def observe_batch(self, prefix, h):
        return self.obs_spec.features(prefix, h, self.num_states, self.horizon)

    def _forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.shapes[0][0]:
            raise ConfigurationError(f"observation length {x.shape[-1]} != {self.shapes[0][0]}")
        W1, b1, W2, b2, W3, b3 = self._unpack(self.params)
        z1 = x @ W1 + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ W2 + b2
        a2 = np.maximum(z2, 0.0)
        return x, z1, a1, z2, a2, a2 @ W3 + b3

    def logits(self, obs):
        return self._forward(obs)[-1]

    def backward(self, obs, dlogits):
        x, z1, a1, z2, a2, _ = self._forward(obs)
        _, _, W2, _, W3, _ = self._unpack(self.params)
        gW3 = a2.T @ dlogits
        gb3 = dlogits.sum(axis=0)
        dz2 = (dlogits @ W3.T) * (z2 > 0)
        gW2 = a1.T @ dz2
        gb2 = dz2.sum(axis=0)
        dz1 = (dz2 @ W2.T) * (z1 > 0)
        gW1 = x.T @ dz1
        gb1 = dz1.sum(axis=0)
        return np.concatenate([g.ravel() for g in (gW1, gb1, gW2, gb2, gW3, gb3)])

    def _clone(self):
        return MlpPolicy(self.num_states, self.num_actions, self.horizon, self.hidden,
                         self.obs_spec, params=self.params.copy())

    def header(self):
        return {**super().header(), "arch": {"hidden": list(self.hidden)}, "obs_spec": asdict(self.obs_spec)}


def load_policy(path) -> Policy:
    """Read a checkpoint written by :meth:`Policy.save`."""
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    params = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    if params.size != header["num_params"]:
        raise ConfigurationError(
            f"checkpoint holds {params.size} parameters, header says {header['num_params']}"
        )
    V, A, H = header["num_states"], header["num_actions"], header["horizon"]
    if header["kind"] == "tabular_softmax":
        return TabularSoftmax(V, A, H, header["arch"]["time_indexed"], params=params)
    if header["kind"] in ("mlp", "history_mlp"):
        return MlpPolicy(V, A, H, header["arch"]["hidden"], ObservationSpec(**header["obs_spec"]), params=params)
    raise ConfigurationError(f"cannot load policy kind {header['kind']!r}")


def make_policy(spec, num_states: int, num_actions: int, horizon: int, seed: int = 0,
                hidden=(64, 64)) -> Policy:
    """Build a policy from ``"tabular"``, ``"mlp"`` or ``"history:k"`` (``k`` may be ``H``)."""
    if spec in ("tabular", "tabular_softmax"):
        return TabularSoftmax(num_states, num_actions, horizon)
    if spec == "mlp":
        return MlpPolicy(num_states, num_actions, horizon, hidden, seed=seed)
    if isinstance(spec, str) and spec.startswith("history:"):
        k = spec.split(":", 1)[1]
        k = max(horizon, 1) if k in ("H", "h") else int(k)
        return MlpPolicy(num_states, num_actions, horizon, hidden, ObservationSpec("history_window", k), seed=seed)
    raise ConfigurationError(f"unknown policy spec {spec!r}")
