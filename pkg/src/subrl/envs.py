"""Environment builders: grid worlds, two rooms, item layouts, densities, epsilon-bandit.

Grid cell ``(x, y)`` is state ``y * width + x``.  Actions are
``0 right (+x), 1 up (+y), 2 left (-x), 3 down (-y), 4 stay``; moves that
leave the grid or enter a wall become "stay".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigurationError, Smdp
from .gp import GpParams

ACTIONS = ("right", "up", "left", "down", "stay")
MOVES = np.array([(1, 0), (0, 1), (-1, 0), (0, -1), (0, 0)])


@dataclass
class GridSpec:
    width: int
    height: int
    horizon: int
    slip: float = 0.0  # probability of replacing the action by a uniform one
    start: tuple | str = (0, 0)  # (x, y) or "uniform"
    blocked: np.ndarray | None = None  # (height, width) bool mask of walls

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("grid must have positive width and height")
        if not 0.0 <= self.slip <= 1.0:
            raise ConfigurationError("slip probability must lie in [0, 1]")


def _move_table(width: int, height: int, blocked=None) -> np.ndarray:
    """``(V, 5)`` deterministic successor of each state under each action."""
    V = width * height
    ys, xs = np.divmod(np.arange(V), width)
    succ = np.empty((V, len(MOVES)), dtype=np.int64)
    free = np.ones((height, width), dtype=bool) if blocked is None else ~np.asarray(blocked, dtype=bool)
    for a, (dx, dy) in enumerate(MOVES):
        nx, ny = xs + dx, ys + dy
        inside = (nx >= 0) & (nx < width) & (ny >= 0) & (ny < height)
        nx, ny = np.where(inside, nx, xs), np.where(inside, ny, ys)
        ok = free[ny, nx]
        succ[:, a] = np.where(ok, ny * width + nx, np.arange(V))
    return succ


def build_grid(spec: GridSpec) -> Smdp:
    """Dense stationary grid SMDP with five actions and optional slip."""
    V, A = spec.width * spec.height, len(MOVES)
    succ = _move_table(spec.width, spec.height, spec.blocked)
    move = np.zeros((V, A, V))
    move[np.arange(V)[:, None], np.arange(A)[None, :], succ] = 1.0
    if spec.slip > 0:
        table = (1.0 - spec.slip) * move + spec.slip * move.mean(axis=1, keepdims=True)
    else:
        table = move
    if spec.start == "uniform":
        free = np.ones(V, dtype=bool) if spec.blocked is None else ~np.asarray(spec.blocked, dtype=bool).ravel()
        rho = free / free.sum()
    else:
        x, y = spec.start
        if not (0 <= x < spec.width and 0 <= y < spec.height):
            raise ConfigurationError(f"start {spec.start} outside the grid")
        rho = np.zeros(V)
        rho[y * spec.width + x] = 1.0
    meta = {"grid_width": spec.width, "grid_height": spec.height}
    if spec.blocked is not None:
        meta["blocked"] = np.asarray(spec.blocked, dtype=bool).astype(int).tolist()
    return Smdp.stationary(table, spec.horizon, rho, meta)


def two_rooms_layout(corridor_length: int, room_size: int):
    """Two ``room_size`` squares joined by a one-cell-wide corridor along the middle row.

    Returns ``(width, height, blocked, start)``; the start is the corridor midpoint.
    """
    if room_size < 1 or corridor_length < 1:
        raise ConfigurationError("rooms and corridor need positive size")
    width, height = 2 * room_size + corridor_length, room_size
    row = room_size // 2
    blocked = np.zeros((height, width), dtype=bool)
    blocked[:, room_size : room_size + corridor_length] = True
    blocked[row, room_size : room_size + corridor_length] = False
    start = (room_size + (corridor_length - 1) // 2, row)
    return width, height, blocked, start


def build_two_rooms(corridor_length: int, room_size: int, horizon: int) -> Smdp:
    width, height, blocked, start = two_rooms_layout(corridor_length, room_size)
    return build_grid(GridSpec(width, height, horizon, 0.0, start, blocked))


def reachable(smdp: Smdp) -> np.ndarray:
    """Boolean mask of states reachable from the initial support (any number of steps)."""
    seen = smdp.initial_dist > 0
    frontier = np.flatnonzero(seen)
    P = smdp.transition[0] if smdp.horizon else None
    while frontier.size and P is not None:
        nxt = np.flatnonzero((P[frontier] > 0).any(axis=(0, 1)) & ~seen)
        seen[nxt] = True
        frontier = nxt
    return seen


@dataclass
class EpsilonBanditSpec:
    num_states: int
    horizon: int
    epsilon: float | Sequence[float] = 0.0
    initial_dist: Sequence[float] | None = None

    def epsilons(self) -> np.ndarray:
        eps = np.broadcast_to(np.asarray(self.epsilon, dtype=float), (self.horizon,)).copy()
        return eps


def epsilon_bound(num_states: int) -> float:
    """Largest admissible per-step epsilon, ``(|V|-1)/|V|``.

    This is the tighter of the two bounds in circulation (the other being
    ``|V|/(|V|+1)``); past it, choosing a state makes reaching it *less*
    likely than reaching any particular other state.
    """
    return (num_states - 1) / num_states


def build_epsilon_bandit(spec: EpsilonBanditSpec) -> Smdp:
    """Action ``a_j`` reaches ``v_j`` w.p. ``1 - eps_h`` and each other state w.p. ``eps_h / (|V|-1)``."""
    V = spec.num_states
    if V < 2:
        raise ConfigurationError("epsilon-bandit needs at least two states")
    eps = spec.epsilons()
    bound = epsilon_bound(V)
    if np.any(eps < 0) or np.any(eps > bound + 1e-15):
        raise ConfigurationError(f"epsilon must lie in [0, {bound:.6g}] for |V|={V}, got {eps.tolist()}")
    P = np.empty((spec.horizon, V, V, V))
    for h, e in enumerate(eps):
        rows = np.full((V, V), e / (V - 1))
        np.fill_diagonal(rows, 1.0 - e)
        P[h] = rows[None, :, :]
    rho = np.full(V, 1.0 / V) if spec.initial_dist is None else np.asarray(spec.initial_dist, dtype=float)
    return Smdp(V, V, spec.horizon, rho, P, {"epsilon": eps.tolist()})


# -- densities ---------------------------------------------------------------


@dataclass
class DensityField:
    values: np.ndarray  # (height, width)
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("density must be a 2-D grid")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("density must be finite and nonnegative")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


def load_density_csv(path) -> DensityField:
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"malformed density CSV {path}: {exc}") from exc
    return DensityField(values, {"kind": "csv_file", "path": str(path)})


def mixture_density(width: int, height: int, means, sigmas, weights=None) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (len(means),))
    weights = np.ones(len(means)) if weights is None else np.asarray(weights, dtype=float)
    out = np.zeros((height, width))
    for (mx, my), s, w in zip(means, sigmas, weights):
        out += w * np.exp(-((xs - mx) ** 2 + (ys - my) ** 2) / (2.0 * s**2))
    return out


def build_density(source: dict, width: int, height: int, seed: int = 0) -> DensityField:
    """Density from a source block.

    ``{"kind": "constant", "value": c}``,
    ``{"kind": "mixture_of_gaussians", "means": [[x, y], ...], "sigmas": ..., "weights": ...}``
    (``"modes": n`` draws ``n`` means from the seed instead),
    ``{"kind": "gp_sample", "lengthscale": l}`` (shifted to a zero minimum), or
    ``{"kind": "csv_file", "path": ...}``.
    """
    kind = source.get("kind", "constant")
    rng = np.random.default_rng(seed)
    if kind == "constant":
        return DensityField(np.full((height, width), float(source.get("value", 1.0))), dict(source))
    if kind == "mixture_of_gaussians":
        if "means" in source:
            means = np.asarray(source["means"], dtype=float)
        else:
            n = int(source.get("modes", 2))
            means = np.column_stack([rng.uniform(0, width - 1, n), rng.uniform(0, height - 1, n)])
        sigmas = source.get("sigmas", 1.0)
        vals = mixture_density(width, height, means, sigmas, source.get("weights"))
        return DensityField(vals, {**source, "means": means.tolist()})
    if kind == "gp_sample":
        params = GpParams.grid(width, height, lengthscale=float(source.get("lengthscale", 3.0)),
                               signal_variance=float(source.get("signal_variance", 1.0)))
        idx = np.arange(width * height)
        K = params.kernel(idx, idx) + 1e-8 * np.eye(idx.size)
        sample = np.linalg.cholesky(K) @ rng.standard_normal(idx.size)
        sample -= sample.min()
        return DensityField(sample.reshape(height, width), dict(source))
    if kind == "csv_file":
        field_ = load_density_csv(source["path"])
        if field_.values.shape != (height, width):
            raise ValueError(f"density CSV shape {field_.values.shape} != grid {(height, width)}")
        return field_
    raise ValueError(f"unknown density source {kind!r}")


# -- item layouts --------------------------------------------------------------


def place_items(width: int, height: int, group_sizes: Sequence[int], seed: int,
                exclude: Sequence[int] = ()) -> list:
    """Disjoint item groups placed uniformly without replacement."""
    rng = np.random.default_rng(seed)
    cells = np.setdiff1d(np.arange(width * height), np.asarray(exclude, dtype=np.int64))
    total = int(sum(group_sizes))
    if total > cells.size:
        raise ConfigurationError("more items than free cells")
    chosen = rng.choice(cells, size=total, replace=False)
    groups, i = [], 0
    for n in group_sizes:
        groups.append(sorted(int(v) for v in chosen[i : i + n]))
        i += n
    return groups


def save_environment(path, smdp: Smdp, reward_cfg: dict | None = None) -> None:
    """Environment file: the SMDP document plus an optional reward block."""
    doc = smdp.to_dict()
    if reward_cfg is not None:
        doc["reward"] = reward_cfg
    Path(path).write_text(json.dumps(doc))


def load_environment(path):
    doc = json.loads(Path(path).read_text())
    return Smdp.from_dict(doc), doc.get("reward")


def shortest_cover_length(smdp: Smdp, footprints: Sequence[Sequence[int]], targets: Sequence[int]) -> int | None:
    """Fewest steps from the fixed start until every target cell is covered.

    ``footprints[v]`` lists the cells covered when ``v`` is visited.  Breadth
    first search over ``(state, covered targets)``; ``None`` if unreachable.
    """
    start = smdp.fixed_start()
    if start is None or not smdp.is_deterministic() or smdp.horizon == 0:
        raise ValueError("needs deterministic dynamics, a fixed start and H >= 1")
    pos = {int(t): i for i, t in enumerate(targets)}
    masks = [sum(1 << pos[c] for c in fp if c in pos) for fp in footprints]
    full = (1 << len(pos)) - 1
    succ = smdp.successor_table()[0]
    node = (start, masks[start])
    if node[1] == full:
        return 0
    seen, frontier, depth = {node}, [node], 0
    while frontier:
        depth += 1
        nxt = []
        for v, m in frontier:
            for w in set(int(x) for x in succ[v]):
                child = (w, m | masks[w])
                if child[1] == full:
                    return depth
                if child not in seen:
                    seen.add(child)
                    nxt.append(child)
        frontier = nxt
    return None
