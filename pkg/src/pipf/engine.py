"""Sliding-window path-integral particle filter.

Each filtering step re-solves a smoothing problem over the last H grid
steps: trajectories are sampled from the prior ensemble under a proposal
controller, weighted by exp(-S) with S the window cost, and the prior
for the next window is advanced one step using the head partial of the
same cost. Resampling, when triggered by a low effective ratio, draws
prior particles from the full-window weights and resets their weights
to exp(+tail cost) so the tail likelihood is not double counted once
the next windows re-accumulate it.

All weight arithmetic is in log space. For the first H steps, while the
window is still growing, each output is an independent smoothing pass
over [0, t_j] started from the initial ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

from . import streams
from .errors import DegenerateWeightsError, UsageError
from .observation import ObservationModel, ObservationRecord, window_cost_partials
from .sde import DiffusionModel, sample_initial, simulate_ensemble


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    """Shift log weights so the weights sum to one; rejects total underflow."""
    norm = logsumexp(log_w)
    if not np.isfinite(norm):
        raise DegenerateWeightsError("all particle weights underflowed")
    return log_w - norm


def effective_ratio(weights: np.ndarray) -> float:
    """Weight-degeneracy measure 1 / (K sum w^2); 1 iff weights are uniform."""
    w = np.asarray(weights, dtype=float)
    total_sq = float((w * w).sum())
    if total_sq <= 0.0:
        raise DegenerateWeightsError("weights are identically zero")
    return 1.0 / (w.shape[0] * total_sq)


def effective_ratio_log(log_w: np.ndarray) -> float:
    """effective_ratio evaluated from normalized log weights."""
    return float(np.exp(-np.log(log_w.shape[0]) - logsumexp(2.0 * log_w)))


@dataclass
class WeightedEnsemble:
    """Particles with normalized weights representing one posterior."""

    particles: np.ndarray          # (K, n)
    log_weights: np.ndarray        # (K,), normalized in log space

    def __post_init__(self):
        if self.particles.shape[0] != self.log_weights.shape[0]:
            raise UsageError("particle/weight count mismatch")

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "WeightedEnsemble":
        k = particles.shape[0]
        return cls(particles=particles, log_weights=np.full(k, -np.log(k)))


def multinomial_resample_indices(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w = np.exp(normalize_log_weights(log_w))
    w = w / w.sum()
    return rng.choice(w.shape[0], size=w.shape[0], p=w)


def systematic_resample_indices(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w = np.exp(normalize_log_weights(log_w))
    w = w / w.sum()
    k = w.shape[0]
    u = (rng.uniform(0.0, 1.0) + np.arange(k)) / k
    return np.minimum(np.searchsorted(np.cumsum(w), u), k - 1)


_RESAMPLERS = {
    "multinomial": multinomial_resample_indices,
    "systematic": systematic_resample_indices,
}


def multinomial_resample(ensemble: WeightedEnsemble, resample_log_weights: np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    """K i.i.d. particle draws from the given (log) resampling weights."""
    idx = multinomial_resample_indices(resample_log_weights, rng)
    return ensemble.particles[idx]


@dataclass
class WindowState:
    """Prior ensemble at the start of the next window."""

    start_index: int
    prior: WeightedEnsemble


@dataclass
class FilterOutput:
    """Posterior ensemble and diagnostics for one filtering step."""

    step: int
    time: float
    ensemble: WeightedEnsemble
    gamma: float
    resampled: bool
    resample_indices: np.ndarray | None = field(default=None, repr=False)


# policy factories receive (window start index, window end index, prior ensemble)
PolicyFactory = Callable[[int, int, WeightedEnsemble], object]


def _window_pass(model: DiffusionModel, obs: ObservationModel, record: ObservationRecord,
                 policy, i0: int, i1: int, x0: np.ndarray, seed: int, trial: int
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Sample the window ensemble and return (states, cost partials).

    Noise is keyed by the window's end index, so re-simulating a window
    is reproducible while overlapping windows stay independent. A window
    of length one draws the same block as the plain one-step filter.
    """
    grid = record.grid
    n_sub = i1 - i0
    noise = streams.normal_block(seed, (streams.PROPAGATION, trial, i1),
                                 (n_sub, x0.shape[0], model.m), scale=np.sqrt(grid.dt))
    states, controls = simulate_ensemble(model, grid, i0, policy, x0, noise)
    partials = window_cost_partials(obs, record, i0, states, controls, noise)
    return states, partials


def pipf_window_step(state: WindowState, window: tuple[int, int],
                     policy_factory: PolicyFactory, model: DiffusionModel,
                     obs: ObservationModel, record: ObservationRecord,
                     gamma_thres: float, seed: int, trial: int,
                     resample: bool = True, resample_kind: str = "multinomial"
                     ) -> tuple[FilterOutput, WindowState]:
    """One sliding-window update: sample, weight, advance the prior, resample."""
    i0, i1 = window
    if state.start_index != i0:
        raise UsageError("window start does not match the prior ensemble")
    policy = policy_factory(i0, i1, state.prior)
    states, partials = _window_pass(model, obs, record, policy, i0, i1,
                                    state.prior.particles, seed, trial)
    cost_full = partials[-1]
    cost_head = partials[0]

    log_filt = normalize_log_weights(state.prior.log_weights - cost_full)
    gamma = effective_ratio_log(log_filt)
    out = WeightedEnsemble(particles=states[-1], log_weights=log_filt)

    prior_particles = states[1]
    prior_log_w = state.prior.log_weights - cost_head
    resampled = False
    idx = None
    if resample and gamma < gamma_thres:
        rng = streams.generator(seed, streams.RESAMPLE, trial, i1)
        idx = _RESAMPLERS[resample_kind](log_filt, rng)
        cost_tail = cost_full - cost_head
        prior_particles = states[1][idx]
        prior_log_w = cost_tail[idx]
        resampled = True
    next_state = WindowState(
        start_index=i0 + 1,
        prior=WeightedEnsemble(prior_particles, normalize_log_weights(prior_log_w)),
    )
    output = FilterOutput(step=i1, time=record.grid.time(i1), ensemble=out,
                          gamma=gamma, resampled=resampled, resample_indices=idx)
    return output, next_state


def pipf_run(model: DiffusionModel, obs: ObservationModel, record: ObservationRecord,
             n_particles: int, window: int, policy_factory: PolicyFactory,
             gamma_thres: float = 0.5, seed: int = 0, trial: int = 0,
             resample: bool = True, resample_kind: str = "multinomial"
             ) -> Iterator[FilterOutput]:
    """Run the filter over the whole record, yielding one output per step.

    Steps j <= window use growing-window smoothing over [0, t_j] from the
    initial ensemble; the sliding recursion with prior bookkeeping takes
    over at j = window. Step 0 reports the initial ensemble itself.
    """
    if n_particles < 1 or window < 1:
        raise UsageError("particle count and window size must be positive")
    grid = record.grid
    n_steps = grid.n_steps
    x0 = sample_initial(model, n_particles, streams.generator(seed, streams.INIT, trial))
    init = WeightedEnsemble.uniform(x0)
    yield FilterOutput(step=0, time=grid.time(0), ensemble=init, gamma=1.0, resampled=False)

    state = None
    for j in range(1, min(window, n_steps) + 1):
        policy = policy_factory(0, j, init)
        states, partials = _window_pass(model, obs, record, policy, 0, j, x0, seed, trial)
        log_filt = normalize_log_weights(init.log_weights - partials[-1])
        gamma = effective_ratio_log(log_filt)
        resampled = False
        idx = None
        if j == window and n_steps > window:
            # hand-off: the smoothing pass seeds the sliding prior at t_1
            prior_particles = states[1]
            prior_log_w = init.log_weights - partials[0]
            if resample and gamma < gamma_thres:
                rng = streams.generator(seed, streams.RESAMPLE, trial, j)
                idx = _RESAMPLERS[resample_kind](log_filt, rng)
                cost_tail = partials[-1] - partials[0]
                prior_particles = states[1][idx]
                prior_log_w = cost_tail[idx]
                resampled = True
            state = WindowState(1, WeightedEnsemble(prior_particles,
                                                    normalize_log_weights(prior_log_w)))
        yield FilterOutput(step=j, time=grid.time(j),
                           ensemble=WeightedEnsemble(states[-1], log_filt),
                           gamma=gamma, resampled=resampled, resample_indices=idx)

    for j in range(window + 1, n_steps + 1):
        output, state = pipf_window_step(state, (j - window, j), policy_factory,
                                         model, obs, record, gamma_thres, seed, trial,
                                         resample=resample, resample_kind=resample_kind)
        yield output


@dataclass
class SmoothingResult:
    """Weighted path ensemble approximating the posterior over a window."""

    paths: np.ndarray        # (S+1, K, n)
    log_weights: np.ndarray  # (K,), normalized
    grid_start: int

    def marginal(self, offset: int) -> WeightedEnsemble:
        return WeightedEnsemble(self.paths[offset], self.log_weights)


def smoothing_posterior(model: DiffusionModel, obs: ObservationModel,
                        record: ObservationRecord, n_particles: int, policy,
                        seed: int = 0, trial: int = 0, t_end: float | None = None,
                        initial_proposal=None) -> SmoothingResult:
    """Importance-weighted path posterior over [t_0, t_end].

    By default paths start from the model prior, so the initial density
    ratio is one. An explicit proposal can be supplied as an object with
    sample(rng, K) -> (K, n) and log_prior_ratio(x) -> (K,) giving
    log d(nu_0)/d(pi_0); its ratio enters the weights multiplicatively.
    """
    grid = record.grid
    i1 = grid.n_steps if t_end is None else grid.index(t_end)
    if i1 < 1:
        raise UsageError("smoothing window must contain at least one step")
    rng = streams.generator(seed, streams.INIT, trial)
    if initial_proposal is None:
        x0 = sample_initial(model, n_particles, rng)
        log_ratio = np.zeros(n_particles)
    else:
        x0 = initial_proposal.sample(rng, n_particles)
        log_ratio = np.asarray(initial_proposal.log_prior_ratio(x0), dtype=float)
    states, partials = _window_pass(model, obs, record, policy, 0, i1, x0, seed, trial)
    log_w = normalize_log_weights(log_ratio - partials[-1])
    return SmoothingResult(paths=states, log_weights=log_w, grid_start=0)
