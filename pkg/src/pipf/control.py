"""Proposal controllers: zero, finite-horizon affine LQR, and iLQR.

The window smoothing problem is an optimal control problem with running
cost |u|^2/2 + g(t, x) built from the measurements. After summation by
parts the measurement part becomes the stage cost

    x' Q x / 2 - r_l . x,   Q = C'C / sigma_b^2,   r_l = C' dY_l / (sigma_b^2 dt)

with zero terminal cost, so the value function is quadratic,
V(t, x) = x' P_t x / 2 + s_t' x + c_t, and the optimal feedback is
u(t, x) = -sigma' (P_t x + s_t). P and s satisfy backward Riccati /
adjoint recursions solved here with explicit Euler steps on the
simulation grid. iLQR reuses the same backward pass with time-varying
linearizations around a nominal trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import streams
from .errors import ControlDesignError, DegenerateWeightsError, UsageError
from .observation import ObservationModel, ObservationRecord, window_cost_partials
from .sde import DiffusionModel, simulate_ensemble


class ZeroPolicy:
    """u = 0 everywhere; turns the filter into plain prior propagation."""

    kind = "zero"

    def __init__(self, m: int):
        self.m = m

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        return np.zeros(x.shape[:-1] + (self.m,))


@dataclass
class AffineValueFunction:
    """Quadratic value ansatz on a window: V_j(x) = x'P_j x/2 + s_j'x + c.

    P and s are indexed by window grid point, zero at the window end.
    The constant term never affects the policy and is not tracked.
    """

    start_time: float
    dt: float
    P: np.ndarray  # (S+1, n, n)
    s: np.ndarray  # (S+1, n)


class AffinePolicy:
    """Time-varying affine feedback u(t_j, x) = -sigma' (P_j x + s_j)."""

    def __init__(self, value: AffineValueFunction, sigma: np.ndarray, kind: str = "lqr"):
        self.value = value
        self.sigma = sigma
        self.kind = kind
        self._n_stages = value.P.shape[0] - 1

    def _index(self, t: float) -> int:
        j = int(round((t - self.value.start_time) / self.value.dt))
        return min(max(j, 0), self._n_stages - 1)

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        j = self._index(t)
        x = np.asarray(x, dtype=float)
        return -(x @ self.value.P[j] + self.value.s[j]) @ self.sigma


@dataclass
class NominalTrajectory:
    """Noise-free reference trajectory an iLQR pass linearized around."""

    states: np.ndarray        # (S+1, n)
    controls: np.ndarray      # (S, m)
    linearizations: np.ndarray  # (S, n, n) drift Jacobians along the nominal
    cost_history: np.ndarray | None = None  # accepted cost after each iteration


def clip_to_psd(P: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone.

    The explicit backward step can push the smallest eigenvalue O(dt^2)
    below zero for semidefinite stage costs; the exact flow never does.
    """
    if P.shape[0] == 1:
        return np.maximum(P, 0.0)
    vals, vecs = np.linalg.eigh(P)
    if vals[0] >= 0.0:
        return P
    clipped = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return 0.5 * (clipped + clipped.T)


def _affine_backward_pass(A: np.ndarray, beta: np.ndarray, Q: np.ndarray,
                          q: np.ndarray, noise_cov: np.ndarray, dt: float
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Backward Euler sweep for the quadratic value function.

    Per-stage data A, beta (affine dynamics x' ~ A x + beta + sigma u),
    Q, q (stage cost x'Qx/2 + q'x), noise_cov = sigma sigma'. Returns
    (P, s) with P[S] = 0, s[S] = 0; P is kept symmetric PSD throughout.
    """
    n_stages, n = A.shape[0], A.shape[1]
    P = np.zeros((n_stages + 1, n, n))
    s = np.zeros((n_stages + 1, n))
    for l in range(n_stages - 1, -1, -1):
        Pn = P[l + 1]
        AtP = A[l].T @ Pn
        Pl = Pn + dt * (AtP + AtP.T - Pn @ noise_cov @ Pn + Q[l])
        P[l] = clip_to_psd(0.5 * (Pl + Pl.T))
        s[l] = s[l + 1] + dt * ((A[l] - noise_cov @ Pn).T @ s[l + 1]
                                + Pn @ beta[l] + q[l])
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(s))):
        raise ControlDesignError("backward pass diverged; use a smaller dt")
    return P, s


def lqr_design(A: np.ndarray, sigma: np.ndarray, C: np.ndarray, sigma_b: float,
               record: ObservationRecord, window: tuple[float, float]
               ) -> tuple[AffinePolicy, AffineValueFunction]:
    """Exact window controller for linear dynamics and a linear sensor.

    The observation drive enters through r_l = C' dY_l / (sigma_b^2 dt),
    the piecewise-constant rate of the measurement increments.
    """
    grid = record.grid
    i0, i1 = grid.index(window[0]), grid.index(window[1])
    if i1 <= i0:
        raise UsageError("window end must come after its start")
    n_stages = i1 - i0
    A = np.atleast_2d(np.asarray(A, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    s2 = sigma_b ** 2
    Q = C.T @ C / s2
    r = record.dy[i0:i1] @ C / (s2 * grid.dt)     # (S, n)
    P, s = _affine_backward_pass(
        A=np.broadcast_to(A, (n_stages, n, n)),
        beta=np.zeros((n_stages, n)),
        Q=np.broadcast_to(Q, (n_stages, n, n)),
        q=-r,
        noise_cov=sigma @ sigma.T,
        dt=grid.dt,
    )
    value = AffineValueFunction(start_time=grid.time(i0), dt=grid.dt, P=P, s=s)
    return AffinePolicy(value, sigma, kind="lqr"), value


def _fd_jacobian(f, t: float, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences, used when a model has no analytic Jacobian."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = eps
        cols.append((np.atleast_1d(f(t, x + step)) - np.atleast_1d(f(t, x - step))) / (2 * eps))
    return np.stack(cols, axis=-1)


def _rollout(model: DiffusionModel, grid, i0: int, x_init: np.ndarray,
             controls_fn) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free forward pass; controls_fn(l, x) -> control at stage l."""
    sigma = model.constant_dispersion
    n_stages = controls_fn.n_stages
    states = np.empty((n_stages + 1, model.n))
    controls = np.empty((n_stages, model.m))
    x = np.array(x_init, dtype=float)
    states[0] = x
    for l in range(n_stages):
        t = grid.time(i0 + l)
        u = controls_fn(l, x)
        x = x + (np.atleast_1d(model.drift(t, x)) + sigma @ u) * grid.dt
        states[l + 1] = x
        controls[l] = u
    return states, controls


class _FixedControls:
    def __init__(self, controls: np.ndarray):
        self.controls = controls
        self.n_stages = controls.shape[0]

    def __call__(self, l, x):
        return self.controls[l]


class _SearchControls:
    """u_l = ubar_l + alpha * k_l + K_l (x - xbar_l) for the forward pass."""

    def __init__(self, ubar, xbar, k, K, alpha):
        self.ubar, self.xbar, self.k, self.K, self.alpha = ubar, xbar, k, K, alpha
        self.n_stages = ubar.shape[0]

    def __call__(self, l, x):
        return self.ubar[l] + self.alpha * self.k[l] + self.K[l] @ (x - self.xbar[l])


def _window_stage_cost(obs: ObservationModel, record: ObservationRecord, i0: int,
                       states: np.ndarray, controls: np.ndarray) -> float:
    """Discretized window cost of a deterministic trajectory (no noise terms)."""
    zeros = np.zeros((controls.shape[0], 1, controls.shape[1]))
    partials = window_cost_partials(obs, record, i0, states[:, None, :],
                                    controls[:, None, :], zeros)
    return float(partials[-1, 0])


def ilqr_design(model: DiffusionModel, obs: ObservationModel, record: ObservationRecord,
                window: tuple[float, float], x_init: np.ndarray, iters: int = 10,
                backtrack_max: int = 8, backtrack_factor: float = 0.5
                ) -> tuple[AffinePolicy, NominalTrajectory]:
    """Iteratively linearized window controller for nonlinear models.

    Starting from the noise-free zero-control rollout, each iteration
    linearizes the dynamics and takes a Gauss-Newton quadratic model of
    the measurement cost along the nominal, solves the affine backward
    pass, and rolls the resulting feedback forward with a backtracking
    line search on the true discretized window cost. On a linear model
    the quadratic model is exact and one iteration reproduces lqr_design.
    """
    if iters < 1:
        raise UsageError("iLQR needs at least one iteration")
    sigma = model.constant_dispersion
    if sigma is None:
        raise ControlDesignError("controller design requires a constant dispersion")
    grid = record.grid
    i0, i1 = grid.index(window[0]), grid.index(window[1])
    n_stages = i1 - i0
    noise_cov = sigma @ sigma.T
    s2 = obs.sigma_b ** 2
    dt = grid.dt
    drift_jac = model.drift_jacobian or (lambda t, x: _fd_jacobian(model.drift, t, x))
    h_jac = obs.h_jacobian or (lambda t, x: _fd_jacobian(obs.h, t, x))

    x_init = np.atleast_1d(np.asarray(x_init, dtype=float))
    xbar, ubar = _rollout(model, grid, i0, x_init,
                          _FixedControls(np.zeros((n_stages, model.m))))
    best_cost = _window_stage_cost(obs, record, i0, xbar, ubar)
    cost_history = [best_cost]

    def backward(xbar_states):
        A = np.empty((n_stages, model.n, model.n))
        beta = np.empty((n_stages, model.n))
        Q = np.empty((n_stages, model.n, model.n))
        q = np.empty((n_stages, model.n))
        for l in range(n_stages):
            t = grid.time(i0 + l)
            xl = xbar_states[l]
            A[l] = np.atleast_2d(drift_jac(t, xl))
            beta[l] = np.atleast_1d(model.drift(t, xl)) - A[l] @ xl
            H = np.atleast_2d(h_jac(t, xl))
            hbar = np.atleast_1d(obs.h(t, xl))
            Q[l] = H.T @ H / s2
            q[l] = H.T @ (hbar - H @ xl) / s2 - (record.dy[i0 + l] @ H) / (s2 * dt)
        return _affine_backward_pass(A, beta, Q, q, noise_cov, dt), A

    lin = None
    for _ in range(iters):
        (P, s), lin = backward(xbar)
        K = -np.einsum("ji,ljk->lik", sigma, P[:-1])          # (S, m, n)
        k = -(np.einsum("li,lij->lj", xbar[:-1], P[:-1]) + s[:-1]) @ sigma - ubar
        improved = False
        alpha = 1.0
        for _ in range(backtrack_max + 1):
            xs, us = _rollout(model, grid, i0, x_init,
                              _SearchControls(ubar, xbar, k, K, alpha))
            if np.all(np.isfinite(xs)):
                cost = _window_stage_cost(obs, record, i0, xs, us)
                if np.isfinite(cost) and cost < best_cost:
                    gain = best_cost - cost
                    xbar, ubar, best_cost = xs, us, cost
                    improved = True
                    break
            alpha *= backtrack_factor
        if not improved:
            break
        cost_history.append(best_cost)
        if gain < 1e-10 * (1.0 + abs(best_cost)):
            break

    (P, s), lin = backward(xbar)
    value = AffineValueFunction(start_time=grid.time(i0), dt=dt, P=P, s=s)
    policy = AffinePolicy(value, sigma, kind="ilqr")
    return policy, NominalTrajectory(states=xbar, controls=ubar, linearizations=lin,
                                     cost_history=np.array(cost_history))


def path_integral_control_estimate(model: DiffusionModel, obs: ObservationModel,
                                   record: ObservationRecord, policy, t: float,
                                   x: np.ndarray, n_rollouts: int, horizon_end: float,
                                   seed: int = 0, trial: int = 0) -> np.ndarray:
    """Monte Carlo estimate of the optimal control at (t, x).

    Samples n_rollouts trajectories under the proposal policy, weights
    them by exp(-S), and corrects the policy output with the weighted
    average of the first noise increments. The correction's variance
    shrinks to zero as the proposal approaches the optimal controller;
    the estimator is a diagnostic for proposal quality, not part of the
    filter loop.
    """
    if n_rollouts < 2:
        raise UsageError("need at least two rollouts")
    grid = record.grid
    i0, i1 = grid.index(t), grid.index(horizon_end)
    if i1 <= i0:
        raise UsageError("horizon end must come after t")
    n_sub = i1 - i0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    noise = streams.normal_block(seed, (streams.CONTROL_EST, trial, i0, i1),
                                 (n_sub, n_rollouts, model.m), scale=np.sqrt(grid.dt))
    x0 = np.broadcast_to(x, (n_rollouts, model.n)).copy()
    states, controls = simulate_ensemble(model, grid, i0, policy, x0, noise)
    costs = window_cost_partials(obs, record, i0, states, controls, noise)[-1]
    log_w = -costs
    norm = logsumexp(log_w)
    if not np.isfinite(norm):
        raise DegenerateWeightsError("all rollout weights underflowed")
    w = np.exp(log_w - norm)
    correction = (w[:, None] * noise[0]).sum(0) / grid.dt
    u0 = policy.evaluate(t, x[None, :])[0]
    return u0 + correction
