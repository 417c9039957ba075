"""Uniform time grid and the L1 discretization of the Caputo derivative.

The L1 scheme approximates the Caputo derivative of order ``alpha`` at t_n by

    d^alpha u(t_n) ~= s * sum_{k=0}^{n-1} b_k (u^{n-k} - u^{n-k-1})

with weights b_k = (k+1)^(1-alpha) - k^(1-alpha) and scale
s = dt^(-alpha) / Gamma(2-alpha).  The scheme is exact on functions that are
piecewise linear in time, which gives a sharp unit test.

Backward (right-sided) fractional problems are handled by time reversal: the
change of variable t -> T - t turns them into forward Caputo problems, so one
stepper serves both directions.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] with precomputed L1 convolution weights."""

    n_steps: int
    dt: float
    T: float
    alpha: float
    l1_weights: np.ndarray = field(repr=False)
    l1_scale: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def trapezoid_weights(self) -> np.ndarray:
        """Composite trapezoid weights over the n_steps+1 time nodes."""
        w = np.full(self.n_steps + 1, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def build_time_grid(T: float, n_steps: int, alpha: float) -> TimeGrid:
    """Construct a TimeGrid, validating the fractional order and step count.

    alpha must lie strictly inside (0, 1): the kernel of the Caputo derivative
    and the coercivity factor cos(pi*alpha/2) both degenerate at the endpoints.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"fractional order alpha must be in (0, 1), got {alpha}")
    if T <= 0.0:
        raise ValueError(f"final time T must be positive, got {T}")
    if n_steps < 2:
        raise ValueError(f"need at least 2 time steps, got {n_steps}")
    k = np.arange(n_steps, dtype=float)
    weights = (k + 1.0) ** (1.0 - alpha) - k ** (1.0 - alpha)
    dt = T / n_steps
    scale = dt ** (-alpha) / gamma(2.0 - alpha)
    return TimeGrid(n_steps=n_steps, dt=dt, T=T, alpha=alpha,
                    l1_weights=weights, l1_scale=scale)


def caputo_apply(history, grid: TimeGrid, n: int) -> float:
    """L1 approximation of the Caputo derivative at t_n from nodal values.

    ``history`` holds u^0 .. u^n (at least n+1 entries).
    """
    if n < 1:
        raise ValueError("caputo_apply requires n >= 1")
    u = np.asarray(history, dtype=float)
    if u.shape[0] < n + 1:
        raise ValueError(f"history has {u.shape[0]} entries, need {n + 1}")
    diffs = u[n:0:-1] - u[n - 1::-1]  # u^{n-k} - u^{n-k-1}, k = 0..n-1
    return grid.l1_scale * float(np.dot(grid.l1_weights[:n], diffs))


def l1_history_combination(u_past: np.ndarray, grid: TimeGrid, n: int) -> np.ndarray:
    """History term of the implicit L1 step at t_n.

    Rearranging the L1 sum isolates the unknown u^n:

        d^alpha u(t_n) ~= s*(b_0 u^n - H_n),
        H_n = sum_{k=1}^{n-1} (b_{k-1} - b_k) u^{n-k} + b_{n-1} u^0.

    ``u_past`` has one column per time node; columns 0..n-1 are read.
    Returns H_n (without the l1_scale factor).
    """
    b = grid.l1_weights
    out = b[n - 1] * u_past[:, 0]
    if n > 1:
        d = b[: n - 1] - b[1:n]  # b_{k-1} - b_k for k = 1..n-1
        # coefficient of u^j is d[n-j-1], j = 1..n-1
        out = out + u_past[:, 1:n] @ d[::-1]
    return out


def time_reverse(values: np.ndarray) -> np.ndarray:
    """Map the time index n -> n_steps - n (last axis). Involution."""
    return np.flip(values, axis=-1).copy()
