"""SIR baseline and exact reference filters (Kalman-Bucy, Benes).

The SIR filter propagates particles with the uncontrolled dynamics and
reweights by the per-step increment likelihood taken from the shared
cost discretization, so its log weights coincide with the window filter
run with H = 1, zero control and shared noise streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import expit

from . import streams
from .engine import (FilterOutput, WeightedEnsemble, _RESAMPLERS, effective_ratio_log,
                     normalize_log_weights)
from .errors import ModelDefinitionError, OracleFailureError, UsageError
from .observation import ObservationModel, ObservationRecord, step_log_likelihoods
from .sde import DiffusionModel, euler_maruyama_step, sample_initial


def sir_step(ensemble: WeightedEnsemble, model: DiffusionModel, obs: ObservationModel,
             record: ObservationRecord, step: int, gamma_thres: float, seed: int,
             trial: int, resample: bool = True, resample_kind: str = "multinomial"
             ) -> FilterOutput:
    """One bootstrap update: propagate, reweight by the increment likelihood.

    Noise and resampling streams are keyed exactly like the window
    filter's one-step windows, so paired comparisons share randomness.
    """
    grid = record.grid
    k = ensemble.size
    dw = streams.normal_block(seed, (streams.PROPAGATION, trial, step + 1),
                              (1, k, model.m), scale=np.sqrt(grid.dt))[0]
    t = grid.time(step)
    u = np.zeros((k, model.m))
    moved = euler_maruyama_step(model, t, ensemble.particles, u, dw, grid.dt)
    log_lik = step_log_likelihoods(obs, record, step, ensemble.particles, moved)
    log_w = normalize_log_weights(ensemble.log_weights + log_lik)
    gamma = effective_ratio_log(log_w)
    resampled = False
    idx = None
    if resample and gamma < gamma_thres:
        rng = streams.generator(seed, streams.RESAMPLE, trial, step + 1)
        idx = _RESAMPLERS[resample_kind](log_w, rng)
        moved = moved[idx]
        log_w = np.full(k, -np.log(k))
        resampled = True
    return FilterOutput(step=step + 1, time=grid.time(step + 1),
                        ensemble=WeightedEnsemble(moved, log_w), gamma=gamma,
                        resampled=resampled, resample_indices=idx)


def sir_run(model: DiffusionModel, obs: ObservationModel, record: ObservationRecord,
            n_particles: int, gamma_thres: float = 0.5, seed: int = 0, trial: int = 0,
            resample: bool = True, resample_kind: str = "multinomial"
            ) -> Iterator[FilterOutput]:
    """Bootstrap particle filter over the whole record."""
    x0 = sample_initial(model, n_particles, streams.generator(seed, streams.INIT, trial))
    ensemble = WeightedEnsemble.uniform(x0)
    yield FilterOutput(step=0, time=record.grid.time(0), ensemble=ensemble,
                       gamma=1.0, resampled=False)
    for step in range(record.grid.n_steps):
        out = sir_step(ensemble, model, obs, record, step, gamma_thres, seed, trial,
                       resample=resample, resample_kind=resample_kind)
        ensemble = out.ensemble
        yield out


@dataclass
class KalmanBucyState:
    mean: np.ndarray  # (n,)
    cov: np.ndarray   # (n, n), SPD


def kalman_bucy_step(state: KalmanBucyState, A: np.ndarray, C: np.ndarray,
                     sigma_b: float, dy: np.ndarray, dt: float,
                     process_cov: np.ndarray | None = None) -> KalmanBucyState:
    """Euler update of the exact linear-Gaussian filter.

    mean += A m dt + (P C' / sigma_b^2)(dy - C m dt)
    cov  += (A P + P A' - P C'C P / sigma_b^2 + process_cov) dt

    process_cov defaults to the identity (unit dispersion).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if process_cov is None:
        process_cov = np.eye(n)
    m, P = state.mean, state.cov
    s2 = sigma_b ** 2
    dy = np.atleast_1d(np.asarray(dy, dtype=float))
    innovation = dy - (C @ m) * dt
    mean = m + (A @ m) * dt + (P @ C.T / s2) @ innovation
    AP = A @ P
    cov = P + (AP + AP.T - P @ C.T @ C @ P / s2 + process_cov) * dt
    cov = 0.5 * (cov + cov.T)
    if np.any(np.linalg.eigvalsh(cov) <= 0.0):
        raise OracleFailureError("filter covariance lost positive definiteness; "
                                 "reduce dt")
    return KalmanBucyState(mean=mean, cov=cov)


def kalman_bucy_run(A: np.ndarray, C: np.ndarray, sigma_b: float,
                    record: ObservationRecord, m0: np.ndarray, P0: np.ndarray,
                    process_cov: np.ndarray | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Exact filter along a record; returns means (L+1, n) and covs (L+1, n, n)."""
    n = np.atleast_1d(np.asarray(m0, dtype=float)).shape[0]
    state = KalmanBucyState(mean=np.atleast_1d(np.asarray(m0, dtype=float)),
                            cov=np.atleast_2d(np.asarray(P0, dtype=float)))
    means = np.empty((record.grid.n_steps + 1, n))
    covs = np.empty((record.grid.n_steps + 1, n, n))
    means[0], covs[0] = state.mean, state.cov
    for j in range(record.grid.n_steps):
        state = kalman_bucy_step(state, A, C, sigma_b, record.dy[j], record.grid.dt,
                                 process_cov=process_cov)
        means[j + 1], covs[j + 1] = state.mean, state.cov
    return means, covs


@dataclass(frozen=True)
class BenesParams:
    """Scalar saturating-drift benchmark with a closed-form posterior.

    dX = mu sigma_w tanh(mu X / sigma_w) dt + sigma_w dW, X_0 = x0
    dY = (h1 X + h1 h2) dt + dB
    """

    mu: float
    sigma_w: float
    h1: float
    h2: float
    x0: float

    def __post_init__(self):
        if self.sigma_w <= 0:
            raise ModelDefinitionError("sigma_w must be positive")
        if self.h1 == 0:
            raise ModelDefinitionError("h1 must be nonzero")


@dataclass
class BenesPosterior:
    """Two-Gaussian mixture: omega N(a-b, s2) + (1-omega) N(a+b, s2)."""

    omega: float
    a: float
    b: float
    sigma2: float

    @property
    def mean(self) -> float:
        return self.a + (1.0 - 2.0 * self.omega) * self.b

    @property
    def var(self) -> float:
        return self.sigma2 + 4.0 * self.omega * (1.0 - self.omega) * self.b ** 2


def _benes_psi(params: BenesParams, record: ObservationRecord, index: int) -> float:
    """Left-point Stieltjes sum of sinh(c t_s)/sinh(c t) against the record."""
    c = params.h1 * params.sigma_w
    times = record.grid.times[:index]
    kernel = np.sinh(c * times)
    return float((kernel * record.dy[:index, 0]).sum() / np.sinh(c * record.grid.time(index)))


def benes_posterior(params: BenesParams, record: ObservationRecord, t: float
                    ) -> BenesPosterior:
    """Closed-form filtering posterior of the saturating-drift model at time t > 0."""
    index = record.grid.index(t)
    if index == 0:
        raise UsageError("posterior parameters are undefined at t = 0")
    c = params.h1 * params.sigma_w
    ct = c * t
    tanh_ct = np.tanh(ct)
    psi = _benes_psi(params, record, index)
    a = params.sigma_w * psi * tanh_ct + (params.h2 + params.x0) / np.cosh(ct) - params.h2
    b = params.mu / params.h1 * tanh_ct
    sigma2 = params.sigma_w / params.h1 * tanh_ct
    omega = float(expit(-(2.0 * a * b / params.sigma_w) / tanh_ct))
    return BenesPosterior(omega=omega, a=a, b=b, sigma2=sigma2)


def benes_posterior_series(params: BenesParams, record: ObservationRecord
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Mixture mean and variance at every grid point.

    Index 0 holds the deterministic start (mean x0, variance 0); later
    entries evaluate the closed form with a cumulative Stieltjes sum.
    """
    grid = record.grid
    c = params.h1 * params.sigma_w
    times = grid.times
    kernel = np.sinh(c * times[:-1])
    terms = np.concatenate([[0.0], np.cumsum(kernel * record.dy[:, 0])])
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = terms / np.sinh(c * times)
    tanh_ct = np.tanh(c * times)
    a = params.sigma_w * psi * tanh_ct + (params.h2 + params.x0) / np.cosh(c * times) - params.h2
    b = params.mu / params.h1 * tanh_ct
    sigma2 = params.sigma_w / params.h1 * tanh_ct
    omega = expit(-(2.0 * a * b / params.sigma_w) / np.where(tanh_ct == 0.0, 1.0, tanh_ct))
    mean = a + (1.0 - 2.0 * omega) * b
    var = sigma2 + 4.0 * omega * (1.0 - omega) * b ** 2
    mean[0], var[0] = params.x0, 0.0
    return mean, var


def benes_density(post: BenesPosterior, x_grid: np.ndarray) -> np.ndarray:
    """Pointwise mixture density on a grid."""
    x = np.asarray(x_grid, dtype=float)
    norm = 1.0 / np.sqrt(2.0 * np.pi * post.sigma2)
    lo = norm * np.exp(-0.5 * (x - (post.a - post.b)) ** 2 / post.sigma2)
    hi = norm * np.exp(-0.5 * (x - (post.a + post.b)) ** 2 / post.sigma2)
    return post.omega * lo + (1.0 - post.omega) * hi
