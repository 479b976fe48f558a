"""Self-contained invariant checks behind the `validate` CLI subcommand.

Each check returns (name, passed, detail). The suite is a fast runtime
smoke test of the identities the library's correctness rests on; the
pytest suite covers the same ground more thoroughly.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import streams
from .baselines import sir_run
from .config import ExperimentConfig
from .control import ZeroPolicy, ilqr_design, lqr_design
from .engine import effective_ratio, multinomial_resample_indices, pipf_run
from .harness import make_truth_and_record, run_ou, zero_policy_factory
from .models import linear_observation, ou_model
from .observation import (ObservationRecord, window_cost, window_cost_partials,
                          window_measurement_cost_hdy)
from .sde import NoisePath, TimeGrid, simulate_path


def _toy_record(seed=7, steps=40, dt=0.05):
    grid = TimeGrid(0.0, dt, steps)
    rng = streams.generator(seed, 99)
    dy = rng.normal(0.0, np.sqrt(dt), size=(steps, 1))
    return grid, ObservationRecord.from_increments(grid, dy), rng


def check_effective_ratio_bounds():
    rng = np.random.default_rng(3)
    ok = True
    for _ in range(200):
        k = rng.integers(2, 60)
        w = rng.dirichlet(np.ones(k))
        g = effective_ratio(w)
        ok &= (1.0 / k - 1e-12) <= g <= 1.0 + 1e-12
    ok &= abs(effective_ratio(np.full(10, 0.1)) - 1.0) < 1e-12
    return "effective ratio in [1/K, 1], 1 iff uniform", bool(ok), ""


def check_resampling_unbiased(reps=10_000):
    particles = np.array([-2.0, -0.5, 0.3, 1.7, 4.0])
    w = np.array([0.05, 0.1, 0.4, 0.25, 0.2])
    log_w = np.log(w)
    rng = np.random.default_rng(11)
    f = particles ** 2
    target = float(w @ f)
    draws = np.empty(reps)
    for r in range(reps):
        idx = multinomial_resample_indices(log_w, rng)
        draws[r] = f[idx].mean()
    se = draws.std(ddof=1) / np.sqrt(reps)
    err = abs(draws.mean() - target)
    return ("multinomial resampling unbiased (3 SE over 1e4 reps)",
            bool(err < 3 * se), f"err={err:.2e} se={se:.2e}")


def check_summation_by_parts():
    grid, record, rng = _toy_record()
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1.0)
    noise = NoisePath(rng.normal(0, np.sqrt(grid.dt), (grid.n_steps, 1)), (0,))
    path = simulate_path(model, grid, ZeroPolicy(1), np.array([0.4]), noise)
    cost = window_cost(path, obs, record, 0.0, grid.time(grid.n_steps))
    alt = window_measurement_cost_hdy(obs, record, 0, path.states[:, None, :])[0]
    err = abs(cost.total - alt)
    return "summation-by-parts identity (machine precision)", bool(err < 1e-11), f"err={err:.2e}"


def check_cost_additivity():
    grid, record, rng = _toy_record()
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1.0)
    noise = NoisePath(rng.normal(0, np.sqrt(grid.dt), (grid.n_steps, 1)), (1,))
    path = simulate_path(model, grid, ZeroPolicy(1), np.array([-0.2]), noise)
    t_a, t_b, t_c = 0.0, grid.time(17), grid.time(grid.n_steps)
    full = window_cost(path, obs, record, t_a, t_c)
    head = window_cost(path, obs, record, t_a, t_b)
    tail = window_cost(path, obs, record, t_b, t_c)
    err = abs(full.total - (head.total + tail.total))
    return "window cost additivity across a split point", bool(err < 1e-10), f"err={err:.2e}"


def check_riccati_and_ilqr():
    grid, record, _ = _toy_record(steps=60, dt=0.02)
    A = np.array([[-1.0]])
    C = np.array([[1.0]])
    sig = np.array([[1.0]])
    policy, value = lqr_design(A, sig, C, 1.0, record, (0.0, grid.time(60)))
    sym = max(abs(p - p.T).max() for p in value.P)
    psd = min(np.linalg.eigvalsh(p).min() for p in value.P)
    model = ou_model(1.0)
    obs = linear_observation(C, 1.0)
    ipolicy, _ = ilqr_design(model, obs, record, (0.0, grid.time(60)),
                             np.array([0.3]), iters=1)
    gap = max(abs(ipolicy.value.P - value.P).max(), abs(ipolicy.value.s - value.s).max())
    ok = sym < 1e-14 and psd > -1e-12 and gap < 1e-10
    return ("gain recursion symmetric/PSD and iLQR == LQR on linear model",
            bool(ok), f"sym={sym:.1e} min_eig={psd:.1e} gap={gap:.1e}")


def check_sir_equivalence():
    cfg = ExperimentConfig(l_steps=50, trials=1, k_particles=64, resampling=False)
    model = ou_model(cfg.kappa, cfg.m0, cfg.p0)
    obs = linear_observation(np.array([[1.0]]), cfg.sigma_b)
    grid = TimeGrid(0.0, cfg.dt, cfg.l_steps)
    _, record = make_truth_and_record(model, obs, grid, cfg.seed, 0)
    sir_out = list(sir_run(model, obs, record, 64, seed=cfg.seed, resample=False))
    pipf_out = list(pipf_run(model, obs, record, 64, 1, zero_policy_factory(model),
                             seed=cfg.seed, resample=False))
    worst = 0.0
    for a, b in zip(sir_out, pipf_out):
        da = a.ensemble.log_weights - a.ensemble.log_weights.mean()
        db = b.ensemble.log_weights - b.ensemble.log_weights.mean()
        worst = max(worst, float(abs(da - db).max()))
    return ("H=1 zero-control filter matches SIR log weights",
            bool(worst < 1e-10), f"max dev={worst:.2e}")


def _hjb_residual(dt, horizon=2.0):
    # smooth observation drive isolates the scheme's own consistency error
    steps = int(round(horizon / dt))
    grid = TimeGrid(0.0, dt, steps)
    dy = np.sin(grid.times[:-1])[:, None] * dt
    record = ObservationRecord.from_increments(grid, dy)
    _, value = lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[1.0]]), 1.0,
                          record, (0.0, grid.time(steps)))
    P, s, r = value.P[:, 0, 0], value.s[:, 0], dy[:, 0] / dt
    dP = (P[2:] - P[:-2]) / (2 * dt)
    ds = (s[2:] - s[:-2]) / (2 * dt)
    res_quad = 0.5 * dP - P[1:-1] - 0.5 * P[1:-1] ** 2 + 0.5
    res_lin = ds - s[1:-1] - P[1:-1] * s[1:-1] - r[1:]
    return max(np.abs(res_quad).max(), np.abs(res_lin).max())


def check_hjb_residual_order():
    coarse = _hjb_residual(0.02)
    fine = _hjb_residual(0.01)
    ok = fine < 0.75 * coarse and coarse < 0.1
    return ("value-function PDE residual is first order in dt", bool(ok),
            f"res(0.02)={coarse:.2e} res(0.01)={fine:.2e}")


def check_deterministic_output():
    cfg = ExperimentConfig(l_steps=12, trials=2, k_particles=32, h_window=4)
    with tempfile.TemporaryDirectory() as tmp:
        a = Path(tmp) / "a.csv"
        b = Path(tmp) / "b.csv"
        run_ou(ExperimentConfig(**{**cfg.__dict__, "out": str(a)}))
        run_ou(ExperimentConfig(**{**cfg.__dict__, "out": str(b)}))
        same = a.read_bytes() == b.read_bytes()
    return "repeated runs produce bitwise-equal output", bool(same), ""


def check_noise_moments():
    dt = 0.01
    block = streams.normal_block(123, (streams.PROPAGATION, 0, 1), (1, 100_000, 1),
                                 scale=np.sqrt(dt))[0, :, 0]
    var = block.var()
    se = dt * np.sqrt(2.0 / block.size)
    ok = abs(var - dt) < 3 * se and abs(block.mean()) < 3 * np.sqrt(dt / block.size)
    return "noise increments have covariance dt*I (3 SE)", bool(ok), f"var={var:.5f}"


ALL_CHECKS = [
    check_effective_ratio_bounds,
    check_resampling_unbiased,
    check_summation_by_parts,
    check_cost_additivity,
    check_riccati_and_ilqr,
    check_hjb_residual_order,
    check_sir_equivalence,
    check_deterministic_output,
    check_noise_moments,
]


def run_all(verbose: bool = True) -> bool:
    all_ok = True
    for check in ALL_CHECKS:
        name, ok, detail = check()
        all_ok &= ok
        if verbose:
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    return all_ok
