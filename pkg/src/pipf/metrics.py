"""Evaluation utilities: ensemble moments, oracle errors, fixed-bandwidth KDE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import WeightedEnsemble
from .errors import UsageError


def ensemble_moments(ensemble: WeightedEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance (no small-sample correction)."""
    w = ensemble.weights
    x = ensemble.particles
    mean = w @ x
    centered = x - mean
    cov = (centered * w[:, None]).T @ centered
    return mean, 0.5 * (cov + cov.T)


@dataclass
class MetricSeries:
    """Per-step scores of one estimator against an oracle."""

    mse_mean: np.ndarray
    mse_cov: np.ndarray
    effective_ratio: np.ndarray
    resampled: np.ndarray

    def __post_init__(self):
        n = self.mse_mean.shape[0]
        for arr in (self.mse_cov, self.effective_ratio, self.resampled):
            if arr.shape[0] != n:
                raise UsageError("metric series lengths differ")


def mse_series(est_means: np.ndarray, est_covs: np.ndarray, oracle_means: np.ndarray,
               oracle_covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared errors per step: Euclidean for means, Frobenius for covariances."""
    est_means = np.asarray(est_means, dtype=float)
    oracle_means = np.asarray(oracle_means, dtype=float)
    if est_means.shape != oracle_means.shape or est_covs.shape != oracle_covs.shape:
        raise UsageError("estimate and oracle series are not aligned")
    dm = est_means - oracle_means
    dc = np.asarray(est_covs, dtype=float) - np.asarray(oracle_covs, dtype=float)
    return (dm * dm).sum(-1), (dc * dc).sum((-2, -1))


@dataclass
class KdeEstimate:
    """Gaussian-kernel density on a fixed grid."""

    x: np.ndarray
    density: np.ndarray
    bandwidth: float


def kde(ensemble: WeightedEnsemble, x_grid: np.ndarray, bandwidth: float,
        chunk: int = 4096) -> KdeEstimate:
    """Weighted Gaussian KDE of a scalar ensemble, chunked over particles."""
    if bandwidth <= 0:
        raise UsageError("bandwidth must be positive")
    if ensemble.particles.shape[1] != 1:
        raise UsageError("kde supports scalar states only")
    x_grid = np.asarray(x_grid, dtype=float)
    locs = ensemble.particles[:, 0]
    w = ensemble.weights
    norm = 1.0 / np.sqrt(2.0 * np.pi * bandwidth ** 2)
    density = np.zeros_like(x_grid)
    for lo in range(0, locs.shape[0], chunk):
        block = locs[lo:lo + chunk]
        z = (x_grid[None, :] - block[:, None]) / bandwidth
        density += w[lo:lo + chunk] @ np.exp(-0.5 * z * z)
    return KdeEstimate(x=x_grid, density=norm * density, bandwidth=bandwidth)


def l1_density_distance(a, b, x_grid: np.ndarray | None = None) -> float:
    """Trapezoid integral of |a - b| over a shared grid; lies in [0, 2].

    Accepts KdeEstimate objects or plain density arrays (then x_grid is
    required). Grids must match exactly.
    """
    if isinstance(a, KdeEstimate):
        a, grid_a = a.density, a.x
    else:
        a, grid_a = np.asarray(a, dtype=float), x_grid
    if isinstance(b, KdeEstimate):
        b, grid_b = b.density, b.x
    else:
        b, grid_b = np.asarray(b, dtype=float), x_grid
    if grid_a is None or grid_b is None:
        raise UsageError("plain density arrays need an explicit x_grid")
    if grid_a.shape != grid_b.shape or np.any(grid_a != grid_b):
        raise UsageError("densities live on different grids")
    return float(np.trapezoid(np.abs(a - b), grid_a))
