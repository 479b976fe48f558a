"""Benchmark system models: scalar OU, random stable linear, saturating drift."""

from __future__ import annotations

import numpy as np

from . import streams
from .baselines import BenesParams
from .observation import ObservationModel
from .sde import DiffusionModel


def ou_model(kappa: float, m0: float = 0.0, p0: float = 1.0) -> DiffusionModel:
    """Scalar mean-reverting process dX = -kappa X dt + dW."""
    return DiffusionModel(
        n=1, m=1,
        drift=lambda t, x: -kappa * x,
        dispersion=np.eye(1),
        init_mean=np.array([m0]),
        init_cov=np.array([[p0]]),
        drift_jacobian=lambda t, x: np.array([[-kappa]]),
    )


def linear_model(A: np.ndarray, m0: np.ndarray, P0: np.ndarray) -> DiffusionModel:
    """dX = A X dt + dW with unit dispersion."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    return DiffusionModel(
        n=n, m=n,
        drift=lambda t, x: x @ A.T,
        dispersion=np.eye(n),
        init_mean=m0,
        init_cov=P0,
        drift_jacobian=lambda t, x: A,
    )


def linear_observation(C: np.ndarray, sigma_b: float) -> ObservationModel:
    """dY = C X dt + sigma_b dB."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return ObservationModel(
        p=C.shape[0],
        h=lambda t, x: x @ C.T,
        sigma_b=sigma_b,
        h_jacobian=lambda t, x: C,
    )


def random_stable_pair(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random (A, C) for the dimension sweep, fixed given (seed, n).

    Entries are standard Gaussian; A is then shifted so the largest
    eigenvalue of its symmetric part is -0.1, which keeps long
    simulations well behaved for every n.
    """
    rng = streams.generator(seed, streams.MODELGEN, n)
    A = rng.normal(size=(n, n))
    C = rng.normal(size=(n, n))
    top = np.linalg.eigvalsh(0.5 * (A + A.T)).max()
    A = A - (top + 0.1) * np.eye(n)
    return A, C


def benes_model(params: BenesParams, init_spread: float = 1e-3) -> DiffusionModel:
    """Saturating-drift diffusion started (almost) deterministically at x0.

    The closed-form posterior assumes an exact start; particles are
    seeded with a tiny spread because the initial prior must be SPD.
    """
    mu, sw = params.mu, params.sigma_w

    def drift(t, x):
        return mu * sw * np.tanh(mu / sw * x)

    def drift_jacobian(t, x):
        return np.atleast_2d(mu ** 2 / np.cosh(mu / sw * x[0]) ** 2)

    return DiffusionModel(
        n=1, m=1,
        drift=drift,
        dispersion=np.array([[sw]]),
        init_mean=np.array([params.x0]),
        init_cov=np.array([[init_spread ** 2]]),
        drift_jacobian=drift_jacobian,
    )


def benes_observation(params: BenesParams) -> ObservationModel:
    """dY = (h1 X + h1 h2) dt + dB; the measurement noise scale is one."""
    h1, h2 = params.h1, params.h2
    return ObservationModel(
        p=1,
        h=lambda t, x: h1 * x + h1 * h2,
        sigma_b=1.0,
        h_jacobian=lambda t, x: np.array([[h1]]),
    )
