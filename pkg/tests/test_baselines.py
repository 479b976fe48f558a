import numpy as np
import pytest

from pipf import streams
from pipf.baselines import (BenesParams, BenesPosterior, KalmanBucyState,
                            benes_density, benes_posterior, benes_posterior_series,
                            kalman_bucy_run, kalman_bucy_step, sir_run, sir_step)
from pipf.engine import WeightedEnsemble
from pipf.errors import ModelDefinitionError, OracleFailureError, UsageError
from pipf.metrics import ensemble_moments
from pipf.models import linear_observation, ou_model
from pipf.observation import ObservationRecord
from pipf.sde import DiffusionModel, TimeGrid


def test_sir_blind_sensor_keeps_weights_uniform(ou_setup):
    model = ou_model(1.0)
    obs = linear_observation(np.array([[0.0]]), 1.0)
    grid = TimeGrid(0.0, 0.01, 20)
    record = ObservationRecord.from_increments(grid, np.zeros((20, 1)))
    outs = list(sir_run(model, obs, record, 64, seed=0))
    for out in outs:
        assert out.gamma == pytest.approx(1.0, abs=1e-12)
        assert not out.resampled


def test_sir_weight_concentrates_on_particle_at_truth():
    # near-deterministic dynamics and a sharp sensor: the particle sitting on
    # the truth soaks up all the weight in one update
    model = DiffusionModel(n=1, m=1, drift=lambda t, x: 0.0 * x,
                           dispersion=1e-9 * np.eye(1), init_mean=np.zeros(1),
                           init_cov=np.eye(1))
    obs = linear_observation(np.array([[1.0]]), 1e-3)
    grid = TimeGrid(0.0, 0.01, 1)
    truth_val = 2.0
    record = ObservationRecord.from_increments(grid, np.array([[truth_val * 0.01]]))
    particles = np.array([[2.0], [1.0], [3.0], [-1.0]])
    ens = WeightedEnsemble.uniform(particles)
    out = sir_step(ens, model, obs, record, 0, gamma_thres=0.0, seed=0, trial=0)
    assert out.ensemble.weights.max() > 0.999
    assert out.ensemble.particles[np.argmax(out.ensemble.weights), 0] == pytest.approx(2.0, abs=1e-6)


def test_sir_tracks_exact_filter(ou_setup):
    model, obs, grid, truth, record = ou_setup(steps=60, seed=4)
    kb_means, kb_covs = kalman_bucy_run(np.array([[-1.0]]), np.array([[1.0]]), 1.0,
                                        record, model.init_mean, model.init_cov)
    outs = list(sir_run(model, obs, record, 10_000, seed=4))
    for j, out in enumerate(outs):
        mean, _ = ensemble_moments(out.ensemble)
        ess = 1.0 / (out.ensemble.weights ** 2).sum()
        se = np.sqrt(kb_covs[j, 0, 0] / ess)
        assert abs(mean[0] - kb_means[j, 0]) < 4 * se


def test_kalman_bucy_step_matches_hand_euler():
    state = KalmanBucyState(mean=np.array([0.5]), cov=np.array([[1.2]]))
    kappa, dt, dy = 1.0, 0.01, 0.03
    nxt = kalman_bucy_step(state, np.array([[-kappa]]), np.array([[1.0]]), 1.0,
                           np.array([dy]), dt)
    m_expected = 0.5 + (-kappa * 0.5) * dt + 1.2 * (dy - 0.5 * dt)
    p_expected = 1.2 + (-2 * kappa * 1.2 - 1.2 ** 2 + 1.0) * dt
    assert nxt.mean[0] == pytest.approx(m_expected, abs=1e-15)
    assert nxt.cov[0, 0] == pytest.approx(p_expected, abs=1e-15)


def test_kalman_bucy_stationary_variance():
    grid = TimeGrid(0.0, 0.01, 1200)
    record = ObservationRecord.from_increments(grid, np.zeros((1200, 1)))
    _, covs = kalman_bucy_run(np.array([[-1.0]]), np.array([[1.0]]), 1.0, record,
                              np.array([0.0]), np.array([[1.0]]))
    assert covs[-1, 0, 0] == pytest.approx(np.sqrt(2.0) - 1.0, rel=1e-6)


def test_kalman_bucy_blind_sensor_follows_prior_moments():
    grid = TimeGrid(0.0, 0.01, 50)
    rng = streams.generator(0, 1)
    record = ObservationRecord.from_increments(grid, rng.normal(size=(50, 1)))
    means, covs = kalman_bucy_run(np.array([[-1.0]]), np.array([[0.0]]), 1.0,
                                  record, np.array([2.0]), np.array([[1.0]]))
    m, p = 2.0, 1.0
    for j in range(50):
        m += -m * 0.01
        p += (-2 * p + 1.0) * 0.01
        assert means[j + 1, 0] == pytest.approx(m, abs=1e-12)
        assert covs[j + 1, 0, 0] == pytest.approx(p, abs=1e-12)


def test_kalman_bucy_zero_innovation_is_pure_drift():
    grid = TimeGrid(0.0, 0.01, 30)
    m, P = np.array([1.5]), np.array([[0.7]])
    state = KalmanBucyState(mean=m.copy(), cov=P.copy())
    for j in range(30):
        dy = state.mean * 0.01   # C = 1: innovation vanishes
        state = kalman_bucy_step(state, np.array([[-1.0]]), np.array([[1.0]]), 1.0,
                                 dy, 0.01)
    assert state.mean[0] == pytest.approx(1.5 * (1 - 0.01) ** 30, abs=1e-12)


def test_kalman_bucy_detects_covariance_collapse():
    state = KalmanBucyState(mean=np.array([0.0]), cov=np.array([[1.0]]))
    with pytest.raises(OracleFailureError):
        kalman_bucy_step(state, np.array([[-1.0]]), np.array([[1.0]]), 1.0,
                         np.array([0.0]), dt=10.0)


def test_benes_params_validation():
    with pytest.raises(ModelDefinitionError):
        BenesParams(mu=1.0, sigma_w=0.0, h1=1.0, h2=0.0, x0=0.0)
    with pytest.raises(ModelDefinitionError):
        BenesParams(mu=1.0, sigma_w=1.0, h1=0.0, h2=0.0, x0=0.0)


def _benes_record(steps=100, dt=0.01, seed=3):
    grid = TimeGrid(0.0, dt, steps)
    rng = streams.generator(seed, 13)
    dy = rng.normal(0.0, np.sqrt(dt), (steps, 1))
    return grid, ObservationRecord.from_increments(grid, dy)


def test_benes_large_time_limits():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=-5.0)
    grid, record = _benes_record(steps=400, dt=0.1)
    post = benes_posterior(params, record, 40.0)
    assert post.sigma2 == pytest.approx(1.0, abs=1e-8)
    assert post.b == pytest.approx(1.0, abs=1e-8)


def test_benes_rejects_time_zero():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=-5.0)
    grid, record = _benes_record()
    with pytest.raises(UsageError):
        benes_posterior(params, record, 0.0)


def test_benes_zero_mu_collapses_to_single_gaussian():
    params = BenesParams(mu=0.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=1.0)
    grid, record = _benes_record()
    post = benes_posterior(params, record, 1.0)
    assert post.b == 0.0
    x = np.linspace(-5, 5, 201)
    single = np.exp(-0.5 * (x - post.a) ** 2 / post.sigma2) / np.sqrt(2 * np.pi * post.sigma2)
    assert np.allclose(benes_density(post, x), single, atol=1e-12)


def test_benes_stieltjes_sum_linear_in_record():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.5, x0=-2.0)
    grid, record = _benes_record()
    doubled = ObservationRecord.from_increments(grid, 2.0 * record.dy)
    t = 1.0
    ct = params.h1 * params.sigma_w * t
    base = benes_posterior(params, record, t)
    twice = benes_posterior(params, doubled, t)
    offset = (params.h2 + params.x0) / np.cosh(ct) - params.h2
    assert twice.a - offset == pytest.approx(2.0 * (base.a - offset), rel=1e-12)


def test_benes_density_single_mode_and_symmetry():
    post = BenesPosterior(omega=1.0, a=2.0, b=0.7, sigma2=0.5)
    x = np.linspace(-4, 8, 401)
    from scipy.stats import norm
    assert np.allclose(benes_density(post, x), norm.pdf(x, 2.0 - 0.7, np.sqrt(0.5)),
                       atol=1e-12)
    sym = BenesPosterior(omega=0.5, a=0.0, b=1.3, sigma2=0.8)
    dens = benes_density(sym, x)
    assert np.allclose(dens, benes_density(sym, -x), atol=1e-14)


def test_benes_density_normalizes():
    post = BenesPosterior(omega=0.3, a=-1.0, b=2.0, sigma2=0.9)
    half_width = 10 * np.sqrt(post.sigma2) + abs(post.b)
    x = np.linspace(post.a - half_width, post.a + half_width, 4001)
    mass = np.trapezoid(benes_density(post, x), x)
    assert 0.999 <= mass <= 1.001


def test_benes_series_matches_pointwise_formula():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=-5.0)
    grid, record = _benes_record(steps=50)
    mean_series, var_series = benes_posterior_series(params, record)
    assert mean_series[0] == params.x0 and var_series[0] == 0.0
    for j in (1, 17, 50):
        post = benes_posterior(params, record, grid.time(j))
        assert mean_series[j] == pytest.approx(post.mean, rel=1e-12)
        assert var_series[j] == pytest.approx(post.var, rel=1e-12)


def test_sir_matches_window_filter_weights_pathwise(ou_setup):
    from pipf.engine import pipf_run
    from pipf.harness import zero_policy_factory
    model, obs, grid, truth, record = ou_setup(steps=25, seed=6)
    a = list(sir_run(model, obs, record, 128, seed=6, resample=False))
    b = list(pipf_run(model, obs, record, 128, 1, zero_policy_factory(model),
                      seed=6, resample=False))
    for oa, ob in zip(a, b):
        assert np.abs(oa.ensemble.log_weights - ob.ensemble.log_weights).max() < 1e-10
