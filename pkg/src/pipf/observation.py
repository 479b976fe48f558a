"""Observation model, synthetic measurements, and trajectory costs.

Measurements are cumulative: dY_t = h(t, X_t) dt + sigma_b dB_t with
Y_0 = 0. A trajectory's importance weight over a window [t_a, t_b] is
exp(-S) with

    S = sum_j [ |h_j|^2 dt / (2 sigma_b^2) + Y~_j . (h_{j+1} - h_j) / sigma_b^2
                + |u_j|^2 dt / 2 + u_j . dW_j ]  -  Y~_b . h_b / sigma_b^2

where Y~ is the record re-based at the window start (Y~_j = Y_j - Y_a).
Re-basing makes S the exact discrete log-likelihood of the window's
measurement increments (plus the Girsanov control terms), so window
costs over consecutive windows add exactly and the sliding-window weight
recursion telescopes with no boundary corrections.

The Y.dh discretization pins left-point Y~ against the forward increment
of h; by discrete summation by parts this equals the better-known
-sum_j h_{j+1} . dY_j form, which is also provided and cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ModelDefinitionError, UsageError
from .sde import DiffusionModel, StatePath, TimeGrid


@dataclass
class ObservationModel:
    """Sensor h(t, x) -> (..., p) read through white noise of scale sigma_b."""

    p: int
    h: Callable[[float, np.ndarray], np.ndarray]
    sigma_b: float
    h_jacobian: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.sigma_b <= 0:
            raise ModelDefinitionError("sigma_b must be positive")


@dataclass
class ObservationRecord:
    """Cumulative measurements on a grid: y[j] = Y_{t_j}, dy[j] = y[j+1] - y[j]."""

    grid: TimeGrid
    y: np.ndarray   # (steps+1, p)
    dy: np.ndarray  # (steps, p)

    def __post_init__(self):
        steps = self.grid.n_steps
        if self.y.shape[0] != steps + 1 or self.dy.shape[0] != steps:
            raise ModelDefinitionError("record arrays inconsistent with grid")
        if np.any(self.y[0] != 0.0):
            raise ModelDefinitionError("cumulative measurement must start at zero")

    @classmethod
    def from_increments(cls, grid: TimeGrid, dy: np.ndarray) -> "ObservationRecord":
        dy = np.atleast_2d(np.asarray(dy, dtype=float))
        if dy.ndim == 1:
            dy = dy[:, None]
        y = np.vstack([np.zeros((1, dy.shape[1])), np.cumsum(dy, axis=0)])
        return cls(grid=grid, y=y, dy=dy)

    def rebased(self, i0: int, n_sub: int) -> np.ndarray:
        """Window-local cumulative observations, zero at index i0.

        Accumulated from increments (not differences of y) so that a
        one-step window reproduces dy[i0] bit-exactly.
        """
        out = np.empty((n_sub + 1, self.dy.shape[1]))
        out[0] = 0.0
        np.cumsum(self.dy[i0:i0 + n_sub], axis=0, out=out[1:])
        return out


def generate_observations(model: DiffusionModel, obs: ObservationModel, grid: TimeGrid,
                          truth: StatePath, rng: np.random.Generator) -> ObservationRecord:
    """Synthesize a measurement record along a truth path.

    Increments use the left-point sensor value, matching the simulator's
    explicit scheme: dy[j] = h(t_j, X_j) dt + sigma_b dB_j.
    """
    times = grid.times[:-1]
    h_vals = np.stack([np.atleast_1d(obs.h(t, truth.states[j]))
                       for j, t in enumerate(times)])
    db = rng.normal(0.0, np.sqrt(grid.dt), size=(grid.n_steps, obs.p))
    dy = h_vals * grid.dt + obs.sigma_b * db
    return ObservationRecord.from_increments(grid, dy)


def running_cost_increment(obs: ObservationModel, y_j: np.ndarray, t_j: float,
                           x_j: np.ndarray, x_next: np.ndarray, dt: float) -> float:
    """One step of the measurement running cost.

    |h(t_j,x_j)|^2 dt / (2 sigma_b^2) + y_j . (h(t_j+dt, x_next) - h(t_j, x_j)) / sigma_b^2.
    y_j is the (window-rebased) cumulative observation at the left endpoint.
    """
    if dt <= 0:
        raise UsageError("dt must be positive")
    h0 = np.atleast_1d(obs.h(t_j, np.asarray(x_j, dtype=float)))
    h1 = np.atleast_1d(obs.h(t_j + dt, np.asarray(x_next, dtype=float)))
    y_j = np.atleast_1d(np.asarray(y_j, dtype=float))
    s2 = obs.sigma_b ** 2
    return float((0.5 * dt * (h0 * h0).sum() + (y_j * (h1 - h0)).sum()) / s2)


def terminal_cost(obs: ObservationModel, y_end: np.ndarray, t_end: float,
                  x: np.ndarray) -> float:
    """Window-end boundary term -y_end . h(t_end, x) / sigma_b^2."""
    h_end = np.atleast_1d(obs.h(t_end, np.asarray(x, dtype=float)))
    y_end = np.atleast_1d(np.asarray(y_end, dtype=float))
    return float(-(y_end * h_end).sum() / obs.sigma_b ** 2)


def _sensor_values(obs: ObservationModel, grid: TimeGrid, i0: int,
                   states: np.ndarray) -> np.ndarray:
    """h at every window grid point; states (S+1, K, n) -> (S+1, K, p)."""
    n_sub = states.shape[0] - 1
    return np.stack([np.atleast_1d(obs.h(grid.time(i0 + j), states[j]))
                     .reshape(states.shape[1], obs.p)
                     for j in range(n_sub + 1)])


def window_cost_partials(obs: ObservationModel, record: ObservationRecord, i0: int,
                         states: np.ndarray, controls: np.ndarray,
                         noise: np.ndarray) -> np.ndarray:
    """Per-particle window costs with all sub-interval partial sums.

    states (S+1, K, n), controls/noise (S, K, m) over global grid steps
    i0 .. i0+S-1. Returns (S, K): entry [c-1] is the cost from the
    window start to offset c, including that endpoint's own terminal
    term, so [-1] is the full-window cost.
    """
    grid = record.grid
    n_sub = states.shape[0] - 1
    h = _sensor_values(obs, grid, i0, states)                # (S+1, K, p)
    y_rel = record.rebased(i0, n_sub)                        # (S+1, p)
    s2 = obs.sigma_b ** 2

    meas = (0.5 * grid.dt * (h[:-1] * h[:-1]).sum(-1)
            + ((h[1:] - h[:-1]) * y_rel[:-1, None, :]).sum(-1)) / s2   # (S, K)
    ctrl = 0.5 * grid.dt * (controls * controls).sum(-1) + (controls * noise).sum(-1)
    running = np.cumsum(meas + ctrl, axis=0)                 # (S, K)
    terminals = -(h[1:] * y_rel[1:, None, :]).sum(-1) / s2   # (S, K)
    return running + terminals


def window_measurement_cost_hdy(obs: ObservationModel, record: ObservationRecord,
                                i0: int, states: np.ndarray) -> np.ndarray:
    """Measurement-only window cost in the -sum h_{j+1} . dY_j form.

    Algebraically identical to the Y.dh-plus-terminal form above (after
    re-basing); better conditioned when h is stiff. Returns (K,).
    """
    grid = record.grid
    n_sub = states.shape[0] - 1
    h = _sensor_values(obs, grid, i0, states)
    dy = record.dy[i0:i0 + n_sub]
    s2 = obs.sigma_b ** 2
    per_step = 0.5 * grid.dt * (h[:-1] * h[:-1]).sum(-1) - (h[1:] * dy[:, None, :]).sum(-1)
    return per_step.sum(0) / s2


@dataclass
class PathCost:
    """Window cost of one trajectory plus its sub-interval partials.

    partials[c-1] holds the cost from the window start through offset c
    (terminal term at c included). Tail costs, obtained by subtraction,
    equal the directly evaluated cost of the tail window re-based at its
    own start, exactly.
    """

    start_index: int
    end_index: int
    partials: np.ndarray = field(repr=False)  # (S,)

    @property
    def total(self) -> float:
        return float(self.partials[-1])

    def partial_to(self, index: int) -> float:
        """Cost over [start, index], terminal at index included."""
        if index == self.start_index:
            return 0.0
        if not (self.start_index < index <= self.end_index):
            raise UsageError("index outside window")
        return float(self.partials[index - self.start_index - 1])

    def tail_from(self, index: int) -> float:
        """Cost over [index, end] as seen from a window re-based at index."""
        return self.total - self.partial_to(index)


def window_cost(path: StatePath, obs: ObservationModel, record: ObservationRecord,
                t_a: float, t_b: float) -> PathCost:
    """Evaluate the importance-weight exponent of one path over [t_a, t_b]."""
    ia = path.grid.index(t_a)
    ib = path.grid.index(t_b)
    if ib <= ia:
        raise UsageError("window end must come after its start")
    states = path.states[ia:ib + 1][:, None, :]
    controls = path.controls[ia:ib][:, None, :]
    noise = path.noise.increments[ia:ib][:, None, :]
    partials = window_cost_partials(obs, record, ia, states, controls, noise)[:, 0]
    if not np.all(np.isfinite(partials)):
        raise UsageError("window cost is not finite")
    return PathCost(start_index=ia, end_index=ib, partials=partials)


def step_log_likelihoods(obs: ObservationModel, record: ObservationRecord, j: int,
                         x_j: np.ndarray, x_next: np.ndarray) -> np.ndarray:
    """Per-particle log-likelihood of the increment dy[j], up to a shared constant.

    Evaluated as minus the one-step window cost with zero control, which
    keeps the SIR baseline's weights bit-identical to the sliding-window
    filter run with H=1 and no control.
    """
    states = np.stack([x_j, x_next])           # (2, K, n)
    zeros = np.zeros((1,) + x_j.shape[:-1] + (1,))
    partials = window_cost_partials(obs, record, j, states, zeros, zeros)
    return -partials[0]
