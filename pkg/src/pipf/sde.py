"""Continuous-time system models and the Euler-Maruyama simulator.

State dynamics follow the controlled SDE

    dX_t = b(t, X_t) dt + sigma(t, X_t) (u_t dt + dW_t)

discretized on a uniform grid with step dt. Drift and sensor callables
are batched: they accept x of shape (..., n) and return (..., n) /
(..., p), so a whole particle ensemble is advanced with one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import streams
from .errors import ModelDefinitionError, SimulationBlowupError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = t0 + j*dt for j = 0..n_steps."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ModelDefinitionError("dt must be positive")
        if self.n_steps < 1:
            raise ModelDefinitionError("grid needs at least one step")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def time(self, j: int) -> float:
        return self.t0 + self.dt * j

    def index(self, t: float) -> int:
        """Map a time to its grid index; raises if t is off-grid."""
        j = (t - self.t0) / self.dt
        j_round = int(round(j))
        if j_round < 0 or j_round > self.n_steps or abs(j - j_round) > 1e-9 * max(1.0, abs(j)) + 1e-9:
            from .errors import UsageError
            raise UsageError(f"time {t} is not a grid point")
        return j_round


@dataclass
class DiffusionModel:
    """Controlled diffusion with a Gaussian initial prior.

    drift(t, x) -> (..., n); dispersion is either a constant (n, m)
    matrix or a callable (t, x) -> (n, m) / (..., n, m). drift_jacobian
    is optional and only needed by the iLQR designer.
    """

    n: int
    m: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    dispersion: np.ndarray | Callable[[float, np.ndarray], np.ndarray]
    init_mean: np.ndarray = field(default=None)
    init_cov: np.ndarray = field(default=None)
    drift_jacobian: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.init_mean = np.atleast_1d(np.asarray(self.init_mean, dtype=float))
        self.init_cov = np.atleast_2d(np.asarray(self.init_cov, dtype=float))
        if self.init_mean.shape != (self.n,):
            raise ModelDefinitionError("initial mean has wrong dimension")
        if self.init_cov.shape != (self.n, self.n):
            raise ModelDefinitionError("initial covariance has wrong shape")
        try:
            self._init_chol = np.linalg.cholesky(self.init_cov)
        except np.linalg.LinAlgError:
            raise ModelDefinitionError("initial covariance is not SPD") from None
        if isinstance(self.dispersion, np.ndarray):
            self.dispersion = np.asarray(self.dispersion, dtype=float)
            if self.dispersion.shape != (self.n, self.m):
                raise ModelDefinitionError("dispersion matrix has wrong shape")

    @property
    def constant_dispersion(self) -> np.ndarray | None:
        return self.dispersion if isinstance(self.dispersion, np.ndarray) else None

    def dispersion_at(self, t: float, x: np.ndarray) -> np.ndarray:
        if isinstance(self.dispersion, np.ndarray):
            return self.dispersion
        return self.dispersion(t, x)


@dataclass(frozen=True)
class NoisePath:
    """Wiener increments for one particle, reproducible from its stream id.

    increments[j] ~ N(0, dt*I_m), stream id (seed, purpose/context...,
    particle). The same id regenerates the same increments no matter in
    which order particles were simulated.
    """

    increments: np.ndarray      # (steps, m)
    stream_id: tuple[int, ...]

    def __len__(self) -> int:
        return self.increments.shape[0]


def draw_noise_block(seed: int, key: tuple[int, ...], n_steps: int, n_particles: int,
                     m: int, dt: float) -> np.ndarray:
    """Ensemble Wiener increments, shape (n_steps, n_particles, m)."""
    return streams.normal_block(seed, key, (n_steps, n_particles, m), scale=np.sqrt(dt))


def draw_noise_path(seed: int, key: tuple[int, ...], particle: int, n_steps: int,
                    n_particles: int, m: int, dt: float) -> NoisePath:
    """One particle's slice of the ensemble block for a stream key."""
    block = draw_noise_block(seed, key, n_steps, n_particles, m, dt)
    return NoisePath(increments=block[:, particle, :], stream_id=(seed, *key, particle))


@dataclass
class StatePath:
    """A simulated trajectory with the controls and noise that produced it."""

    grid: TimeGrid
    states: np.ndarray    # (steps+1, n)
    controls: np.ndarray  # (steps, m)
    noise: NoisePath

    def __post_init__(self):
        steps = self.grid.n_steps
        if self.states.shape[0] != steps + 1 or self.controls.shape[0] != steps:
            raise ModelDefinitionError("path arrays inconsistent with grid")


def euler_maruyama_step(model: DiffusionModel, t: float, x: np.ndarray,
                        u: np.ndarray, dw: np.ndarray, dt: float) -> np.ndarray:
    """One explicit step x + b(t,x) dt + sigma(t,x) (u dt + dw).

    Works on a single state (n,) or a batch (..., n) with matching
    control/noise batches.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    dw = np.asarray(dw, dtype=float)
    if x.shape[-1] != model.n or u.shape[-1] != model.m or dw.shape[-1] != model.m:
        raise ModelDefinitionError("state/control/noise dimensions do not match model")
    drive = u * dt + dw
    sigma = model.dispersion_at(t, x)
    if sigma.ndim == 2:
        pushed = drive @ sigma.T
    else:
        pushed = np.einsum("...ij,...j->...i", sigma, drive)
    return x + model.drift(t, x) * dt + pushed


def simulate_path(model: DiffusionModel, grid: TimeGrid, policy, x0: np.ndarray,
                  noise: NoisePath) -> StatePath:
    """Roll one trajectory forward, recording controls and checking finiteness.

    policy is any object with evaluate(t, x) -> control; deterministic
    given (x0, noise, policy).
    """
    if len(noise) != grid.n_steps:
        raise ModelDefinitionError("noise path length does not match grid")
    x = np.array(np.atleast_1d(x0), dtype=float)
    states = np.empty((grid.n_steps + 1, model.n))
    controls = np.empty((grid.n_steps, model.m))
    states[0] = x
    for j in range(grid.n_steps):
        t = grid.time(j)
        u = np.atleast_1d(np.asarray(policy.evaluate(t, x), dtype=float))
        x = euler_maruyama_step(model, t, x, u, noise.increments[j], grid.dt)
        if not np.all(np.isfinite(x)):
            raise SimulationBlowupError(j)
        states[j + 1] = x
        controls[j] = u
    return StatePath(grid=grid, states=states, controls=controls, noise=noise)


def simulate_ensemble(model: DiffusionModel, grid: TimeGrid, start_index: int,
                      policy, x0: np.ndarray, noise: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Advance K particles over a window in lockstep.

    x0: (K, n) initial states at grid point start_index; noise: (S, K, m)
    increments. Returns (states (S+1, K, n), controls (S, K, m)).
    """
    n_sub = noise.shape[0]
    n_part = x0.shape[0]
    states = np.empty((n_sub + 1, n_part, model.n))
    controls = np.empty((n_sub, n_part, model.m))
    x = np.array(x0, dtype=float)
    states[0] = x
    for j in range(n_sub):
        t = grid.time(start_index + j)
        u = policy.evaluate(t, x)
        x = euler_maruyama_step(model, t, x, u, noise[j], grid.dt)
        if not np.all(np.isfinite(x)):
            raise SimulationBlowupError(start_index + j)
        states[j + 1] = x
        controls[j] = u
    return states, controls


def sample_initial(model: DiffusionModel, n_particles: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw K i.i.d. samples from the Gaussian initial prior, shape (K, n)."""
    if n_particles < 1:
        raise ModelDefinitionError("need at least one particle")
    z = rng.normal(size=(n_particles, model.n))
    return model.init_mean + z @ model._init_chol.T
