"""Benchmark orchestration: trial loops, estimator drivers, CSV emission.

Per trial, one truth path and one measurement record are generated and
shared bit-exactly by every estimator; scores are taken against the
exact reference filter for the scenario. Output files are deterministic
functions of the configuration, including row order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import streams
from .baselines import (BenesParams, benes_posterior, benes_density,
                        benes_posterior_series, kalman_bucy_run, sir_run)
from .config import ExperimentConfig
from .control import (ZeroPolicy, AffinePolicy, AffineValueFunction, clip_to_psd,
                      ilqr_design)
from .engine import FilterOutput, WeightedEnsemble, pipf_run
from .errors import ConfigError
from .metrics import ensemble_moments, kde, l1_density_distance, mse_series
from .models import (benes_model, benes_observation, linear_model,
                     linear_observation, ou_model, random_stable_pair)
from .observation import ObservationModel, ObservationRecord, generate_observations
from .sde import DiffusionModel, NoisePath, TimeGrid, simulate_path

log = logging.getLogger("pipf")

CSV_BASE_COLUMNS = "trial,step,time,estimator,mse_mean,mse_cov,effective_ratio,resampled"


def zero_policy_factory(model: DiffusionModel):
    policy = ZeroPolicy(model.m)
    return lambda i0, i1, prior: policy


def lqr_policy_factory(A: np.ndarray, sigma: np.ndarray, C: np.ndarray,
                       sigma_b: float, record: ObservationRecord):
    """Window LQR with the gain recursion cached by steps-to-go.

    The quadratic coefficient only depends on how far the window end is,
    so P is computed once per length; each window solves only the small
    backward sweep for the observation-driven affine term.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    noise_cov = sigma @ sigma.T
    s2 = sigma_b ** 2
    Q = C.T @ C / s2
    grid = record.grid
    dt = grid.dt
    drive = record.dy @ C / s2       # (L, n): dt * r_l
    gains = [np.zeros_like(A)]       # P after k backward steps
    steps = [np.eye(A.shape[0]) + dt * A.T]  # I + dt (A - noise_cov P_k)'

    def extend(k):
        while len(gains) <= k:
            P = gains[-1]
            AtP = A.T @ P
            nxt = P + dt * (AtP + AtP.T - P @ noise_cov @ P + Q)
            gains.append(clip_to_psd(0.5 * (nxt + nxt.T)))
            steps.append(np.eye(A.shape[0]) + dt * (A - noise_cov @ gains[-2]).T)

    def factory(i0, i1, prior):
        n_sub = i1 - i0
        extend(n_sub)
        P = np.stack([gains[n_sub - l] for l in range(n_sub + 1)])
        s = np.zeros((n_sub + 1, A.shape[0]))
        for l in range(n_sub - 1, -1, -1):
            s[l] = steps[n_sub - l - 1] @ s[l + 1] - drive[i0 + l]
        value = AffineValueFunction(start_time=grid.time(i0), dt=dt, P=P, s=s)
        return AffinePolicy(value, sigma, kind="lqr")

    return factory


def ilqr_policy_factory(model: DiffusionModel, obs: ObservationModel,
                        record: ObservationRecord, iters: int):
    grid = record.grid

    def factory(i0, i1, prior):
        mean, _ = ensemble_moments(prior)
        policy, _ = ilqr_design(model, obs, record, (grid.time(i0), grid.time(i1)),
                                mean, iters=iters)
        return policy

    return factory


def make_truth_and_record(model: DiffusionModel, obs: ObservationModel, grid: TimeGrid,
                          seed: int, trial: int, truth_x0: np.ndarray | None = None
                          ) -> tuple[np.ndarray, ObservationRecord]:
    """Simulate one ground-truth path and its measurement record."""
    gen = streams.generator(seed, streams.TRUTH, trial)
    if truth_x0 is None:
        truth_x0 = model.init_mean + model._init_chol @ gen.normal(size=model.n)
    increments = gen.normal(0.0, np.sqrt(grid.dt), size=(grid.n_steps, model.m))
    noise = NoisePath(increments=increments, stream_id=(seed, streams.TRUTH, trial))
    truth = simulate_path(model, grid, ZeroPolicy(model.m), truth_x0, noise)
    record = generate_observations(model, obs, grid, truth,
                                   streams.generator(seed, streams.OBS, trial))
    return truth.states, record


@dataclass
class EstimatorSeries:
    """Streamed per-step summaries of one filter run."""

    tag: str
    means: np.ndarray        # (L+1, n)
    covs: np.ndarray         # (L+1, n, n)
    gammas: np.ndarray       # (L+1,)
    resampled: np.ndarray    # (L+1,) 0/1
    snapshots: dict[int, WeightedEnsemble]


def consume_filter(tag: str, outputs: Iterator[FilterOutput], n_steps: int, n_dim: int,
                   snapshot_steps: Iterable[int] = ()) -> EstimatorSeries:
    means = np.empty((n_steps + 1, n_dim))
    covs = np.empty((n_steps + 1, n_dim, n_dim))
    gammas = np.empty(n_steps + 1)
    resampled = np.zeros(n_steps + 1, dtype=int)
    snapshot_steps = set(snapshot_steps)
    snapshots: dict[int, WeightedEnsemble] = {}
    for out in outputs:
        means[out.step], covs[out.step] = ensemble_moments(out.ensemble)
        gammas[out.step] = out.gamma
        resampled[out.step] = int(out.resampled)
        if out.step in snapshot_steps:
            snapshots[out.step] = out.ensemble
    return EstimatorSeries(tag=tag, means=means, covs=covs, gammas=gammas,
                           resampled=resampled, snapshots=snapshots)


def _float(x) -> str:
    return repr(float(x))


def write_rows(path: Path, n_dim: int, rows: list[tuple]) -> None:
    header = CSV_BASE_COLUMNS + "".join(f",mean_{i}" for i in range(n_dim))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def score_rows(trial: int, grid: TimeGrid, series: EstimatorSeries,
               oracle_means: np.ndarray, oracle_covs: np.ndarray) -> list[tuple]:
    mse_mean, mse_cov = mse_series(series.means, series.covs, oracle_means, oracle_covs)
    rows = []
    for j in range(grid.n_steps + 1):
        rows.append((str(trial), str(j), _float(grid.time(j)), series.tag,
                     _float(mse_mean[j]), _float(mse_cov[j]), _float(series.gammas[j]),
                     str(series.resampled[j]),
                     *(_float(v) for v in series.means[j])))
    return rows


def _linear_setup(cfg: ExperimentConfig, A: np.ndarray, C: np.ndarray
                  ) -> tuple[DiffusionModel, ObservationModel]:
    n = np.atleast_2d(A).shape[0]
    model = linear_model(A, m0=np.full(n, cfg.m0), P0=cfg.p0 * np.eye(n))
    obs = linear_observation(C, cfg.sigma_b)
    return model, obs


def run_linear_trial(cfg: ExperimentConfig, A: np.ndarray, C: np.ndarray, trial: int,
                     estimators: Iterable[str] = ("sir", "pipf_zero", "pipf_lqr"),
                     h_window: int | None = None
                     ) -> tuple[TimeGrid, dict[str, EstimatorSeries], np.ndarray, np.ndarray]:
    """One trial of a linear scenario: shared record, chosen estimators, exact oracle."""
    model, obs = _linear_setup(cfg, A, C)
    grid = TimeGrid(0.0, cfg.dt, cfg.l_steps)
    _, record = make_truth_and_record(model, obs, grid, cfg.seed, trial)
    kb_means, kb_covs = kalman_bucy_run(A, C, cfg.sigma_b, record,
                                        m0=model.init_mean, P0=model.init_cov)
    h = cfg.h_window if h_window is None else h_window
    factories = {
        "pipf_zero": lambda: zero_policy_factory(model),
        "pipf_lqr": lambda: lqr_policy_factory(A, model.constant_dispersion, C,
                                               cfg.sigma_b, record),
    }
    results = {}
    for tag in estimators:
        if tag == "sir":
            outputs = sir_run(model, obs, record, cfg.k_particles, cfg.gamma_thres,
                              cfg.seed, trial, resample=cfg.resampling,
                              resample_kind=cfg.resampler)
        else:
            outputs = pipf_run(model, obs, record, cfg.k_particles, h, factories[tag](),
                               cfg.gamma_thres, cfg.seed, trial,
                               resample=cfg.resampling, resample_kind=cfg.resampler)
        results[tag] = consume_filter(tag, outputs, grid.n_steps, model.n)
    return grid, results, kb_means, kb_covs


def run_ou(cfg: ExperimentConfig) -> Path:
    """Scalar mean-reverting benchmark: SIR vs window filter (zero and LQR)."""
    A = np.array([[-cfg.kappa]])
    C = np.array([[1.0]])
    rows = []
    for trial in range(cfg.trials):
        grid, results, kb_means, kb_covs = run_linear_trial(cfg, A, C, trial)
        for tag in ("sir", "pipf_zero", "pipf_lqr"):
            rows.extend(score_rows(trial, grid, results[tag], kb_means, kb_covs))
        log.info("ou trial %d/%d done", trial + 1, cfg.trials)
    out = Path(cfg.out)
    write_rows(out, 1, rows)
    return out


def run_h_sweep(cfg: ExperimentConfig, h_list: list[int] | None = None) -> Path:
    """Window-size sweep with shared truth/observation streams per trial."""
    h_list = cfg.h_list if h_list is None else h_list
    A = np.array([[-cfg.kappa]])
    C = np.array([[1.0]])
    controller = "pipf_zero" if cfg.controller == "zero" else "pipf_lqr"
    rows = []
    for trial in range(cfg.trials):
        for h in h_list:
            grid, results, kb_means, kb_covs = run_linear_trial(
                cfg, A, C, trial, estimators=(controller,), h_window=h)
            series = results[controller]
            series.tag = f"{controller}_h{h}"
            rows.extend(score_rows(trial, grid, series, kb_means, kb_covs))
        log.info("h-sweep trial %d/%d done", trial + 1, cfg.trials)
    out = Path(cfg.out)
    write_rows(out, 1, rows)
    return out


def run_linear_nd(cfg: ExperimentConfig, n_list: list[int] | None = None) -> list[Path]:
    """Dimension sweep with random stable systems, one output file per n."""
    n_list = cfg.n_list if n_list is None else n_list
    out = Path(cfg.out)
    paths = []
    for n in n_list:
        A, C = random_stable_pair(n, cfg.seed)
        rows = []
        for trial in range(cfg.trials):
            grid, results, kb_means, kb_covs = run_linear_trial(
                cfg, A, C, trial, estimators=("sir", "pipf_lqr"))
            for tag in ("sir", "pipf_lqr"):
                rows.extend(score_rows(trial, grid, results[tag], kb_means, kb_covs))
            log.info("linear-nd n=%d trial %d/%d done", n, trial + 1, cfg.trials)
        path = out.with_name(f"{out.stem}_n{n}{out.suffix or '.csv'}")
        write_rows(path, n, rows)
        paths.append(path)
    return paths


def run_benes_trial(cfg: ExperimentConfig, trial: int,
                    estimators: Iterable[str] = ("sir", "pipf_zero", "pipf_ilqr"),
                    snapshot_steps: Iterable[int] = ()
                    ) -> tuple[TimeGrid, dict[str, EstimatorSeries], np.ndarray,
                               np.ndarray, ObservationRecord]:
    params = BenesParams(mu=cfg.mu, sigma_w=cfg.sigma_w, h1=cfg.h1, h2=cfg.h2, x0=cfg.x0)
    model = benes_model(params, init_spread=cfg.init_spread)
    obs = benes_observation(params)
    grid = TimeGrid(0.0, cfg.dt, cfg.l_steps)
    _, record = make_truth_and_record(model, obs, grid, cfg.seed, trial,
                                      truth_x0=np.array([params.x0]))
    mean_series, var_series = benes_posterior_series(params, record)
    oracle_means = mean_series[:, None]
    oracle_covs = var_series[:, None, None]
    results = {}
    for tag in estimators:
        if tag == "sir":
            outputs = sir_run(model, obs, record, cfg.k_particles, cfg.gamma_thres,
                              cfg.seed, trial, resample=cfg.resampling,
                              resample_kind=cfg.resampler)
        elif tag == "pipf_zero":
            outputs = pipf_run(model, obs, record, cfg.k_particles, cfg.h_window,
                               zero_policy_factory(model), cfg.gamma_thres, cfg.seed,
                               trial, resample=cfg.resampling, resample_kind=cfg.resampler)
        else:
            factory = ilqr_policy_factory(model, obs, record, cfg.ilqr_iters)
            outputs = pipf_run(model, obs, record, cfg.k_particles, cfg.h_window,
                               factory, cfg.gamma_thres, cfg.seed, trial,
                               resample=cfg.resampling, resample_kind=cfg.resampler)
        results[tag] = consume_filter(tag, outputs, grid.n_steps, 1,
                                      snapshot_steps=snapshot_steps)
    return grid, results, oracle_means, oracle_covs, record


def run_benes(cfg: ExperimentConfig) -> Path:
    """Nonlinear benchmark vs the closed-form mixture posterior.

    Besides the score file this writes two siblings: the snapshot
    densities (time, x, density, source) and their L1 distances to the
    exact density (time, estimator, l1_distance). Snapshots come from
    trial 0.
    """
    grid = TimeGrid(0.0, cfg.dt, cfg.l_steps)
    try:
        snapshot_steps = [grid.index(t) for t in cfg.snapshot_times]
    except Exception:
        raise ConfigError("snapshot times must be grid points inside the horizon")
    params = BenesParams(mu=cfg.mu, sigma_w=cfg.sigma_w, h1=cfg.h1, h2=cfg.h2, x0=cfg.x0)
    x_grid = np.linspace(cfg.density_grid_lo, cfg.density_grid_hi,
                         cfg.density_grid_points)
    rows = []
    density_rows = []
    l1_rows = []
    estimators = ("sir", "pipf_zero", "pipf_ilqr")
    for trial in range(cfg.trials):
        steps = snapshot_steps if trial == 0 else ()
        grid, results, oracle_means, oracle_covs, record = run_benes_trial(
            cfg, trial, estimators=estimators, snapshot_steps=steps)
        for tag in estimators:
            rows.extend(score_rows(trial, grid, results[tag], oracle_means, oracle_covs))
        if trial == 0:
            for step in snapshot_steps:
                t = grid.time(step)
                exact = benes_density(benes_posterior(params, record, t), x_grid)
                for x, d in zip(x_grid, exact):
                    density_rows.append((_float(t), _float(x), _float(d), "exact"))
                for tag in estimators:
                    est = kde(results[tag].snapshots[step], x_grid, cfg.kde_bandwidth)
                    for x, d in zip(x_grid, est.density):
                        density_rows.append((_float(t), _float(x), _float(d), tag))
                    l1_rows.append((_float(t), tag,
                                    _float(l1_density_distance(est.density, exact, x_grid))))
        log.info("benes trial %d/%d done", trial + 1, cfg.trials)
    out = Path(cfg.out)
    write_rows(out, 1, rows)
    suffix = out.suffix or ".csv"
    density_path = out.with_name(f"{out.stem}_density{suffix}")
    with open(density_path, "w") as fh:
        fh.write("time,x,density,source\n")
        for row in density_rows:
            fh.write(",".join(row) + "\n")
    l1_path = out.with_name(f"{out.stem}_density_l1{suffix}")
    with open(l1_path, "w") as fh:
        fh.write("time,estimator,l1_distance\n")
        for row in l1_rows:
            fh.write(",".join(row) + "\n")
    return out
