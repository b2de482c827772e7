"""Gaussian-process information gain with an incrementally grown Cholesky factor.

For observations ``y = f + eps`` with ``f ~ GP(0, k)`` and ``eps ~ N(0, s2 I)``
the information gain of a point multiset ``S`` is
``I(y_S; f) = 1/2 log det(I + K_S / s2)``.  With ``L L^T = I + K_S / s2`` this
is ``sum(log diag(L))``, which lets every appended point cost one triangular
solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

JITTER = 1e-10


class GpNumericalError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class GpParams:
    points: np.ndarray  # (V, d) coordinates, row v is state v
    lengthscale: float = 3.0
    signal_variance: float = 1.0
    noise_variance: float = 0.1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if self.lengthscale <= 0 or self.signal_variance <= 0 or self.noise_variance <= 0:
            raise ValueError("GP hyperparameters must be positive")

    @classmethod
    def grid(cls, width: int, height: int, **kw) -> "GpParams":
        ys, xs = np.divmod(np.arange(width * height), width)
        return cls(np.column_stack([xs, ys]).astype(float), **kw)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    def kernel(self, a, b) -> np.ndarray:
        """RBF kernel between index arrays ``a`` and ``b``."""
        xa = self.points[np.asarray(a, dtype=np.int64)]
        xb = self.points[np.asarray(b, dtype=np.int64)]
        d2 = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(-1)
        return self.signal_variance * np.exp(-d2 / (2.0 * self.lengthscale**2))


def mutual_information(params: GpParams, subset) -> float:
    """``1/2 log det(I + K/s2)`` computed directly; repeated indices are repeated measurements."""
    idx = np.asarray(list(subset), dtype=np.int64)
    _check_range(params, idx)
    if idx.size == 0:
        return 0.0
    A = np.eye(idx.size) + params.kernel(idx, idx) / params.noise_variance
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(A + JITTER * np.eye(idx.size))
        except np.linalg.LinAlgError as exc:
            raise GpNumericalError(
                f"Cholesky failed for {idx.size} points; min eigenvalue {np.linalg.eigvalsh(A).min():.3e}"
            ) from exc
    return float(np.log(np.diag(L)).sum())


def _check_range(params: GpParams, idx: np.ndarray) -> None:
    if idx.size and (idx.min() < 0 or idx.max() >= params.num_points):
        raise IndexError(f"point index out of range [0, {params.num_points})")


class CholState:
    """Chosen points, the Cholesky factor of ``I + K/s2`` over them, and the running MI."""

    def __init__(self, params: GpParams, capacity: int = 16):
        self.params = params
        self.points: list = []
        self._L = np.zeros((capacity, capacity))
        self.value = 0.0

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def factor(self) -> np.ndarray:
        n = self.size
        return self._L[:n, :n]

    def copy(self) -> "CholState":
        new = CholState.__new__(CholState)
        new.params = self.params
        new.points = list(self.points)
        new._L = self._L.copy()
        new.value = self.value
        return new

    def _new_row(self, v: int):
        p = self.params
        n = self.size
        diag = 1.0 + p.signal_variance / p.noise_variance
        if n == 0:
            return np.empty(0), diag
        c = p.kernel(self.points, [v])[:, 0] / p.noise_variance
        row = solve_triangular(self._L[:n, :n], c, lower=True, check_finite=False)
        return row, diag - row @ row

    def _pivot(self, row, d2, v) -> float:
        if d2 <= 0.0:
            d2 += JITTER
            if d2 <= 0.0:
                raise GpNumericalError(
                    f"non-positive pivot {d2:.3e} appending point {v} to {self.size} points"
                )
        return float(np.sqrt(d2))

    def gain(self, v: int) -> float:
        """Gain of appending ``v`` without changing the state."""
        row, d2 = self._new_row(v)
        return float(np.log(self._pivot(row, d2, v)))

    def extend(self, v: int) -> float:
        """Append ``v`` in place and return its information gain."""
        _check_range(self.params, np.array([v]))
        row, d2 = self._new_row(v)
        piv = self._pivot(row, d2, v)
        n = self.size
        if n + 1 > self._L.shape[0]:
            cap = 2 * self._L.shape[0]
            grown = np.zeros((cap, cap))
            grown[:n, :n] = self._L[:n, :n]
            self._L = grown
        self._L[n, :n] = row
        self._L[n, n] = piv
        self.points.append(int(v))
        g = float(np.log(piv))
        self.value += g
        return g


def mi_gain(params: GpParams, state: CholState, v: int):
    """Functional form: ``(gain, new_state)`` with ``state`` left untouched."""
    if state.params is not params:
        raise ValueError("state was built for different GP parameters")
    new = state.copy()
    return new.extend(v), new
