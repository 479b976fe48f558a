import numpy as np
import pytest

from pipf import streams
from pipf.baselines import BenesParams
from pipf.control import (ZeroPolicy, ilqr_design, lqr_design,
                          path_integral_control_estimate)
from pipf.errors import ControlDesignError, DegenerateWeightsError, UsageError
from pipf.models import benes_model, benes_observation, linear_observation, ou_model
from pipf.observation import ObservationRecord, window_cost_partials
from pipf.sde import TimeGrid


def _record(seed=0, steps=80, dt=0.02, scale=1.0):
    rng = streams.generator(seed, 55)
    grid = TimeGrid(0.0, dt, steps)
    dy = scale * rng.normal(0, np.sqrt(dt), (steps, 1))
    return grid, ObservationRecord.from_increments(grid, dy)


def test_zero_policy_is_zero_and_kills_control_terms():
    policy = ZeroPolicy(2)
    assert np.all(policy.evaluate(0.3, np.random.normal(size=(7, 4))) == 0.0)
    grid, record = _record()
    obs = linear_observation(np.array([[1.0]]), 1.0)
    states = np.random.default_rng(0).normal(size=(11, 3, 1))
    zeros = np.zeros((10, 3, 1))
    noisy = np.random.default_rng(1).normal(size=(10, 3, 1))
    with_u0 = window_cost_partials(obs, record, 0, states, zeros, noisy)
    no_ctrl = window_cost_partials(obs, record, 0, states, zeros, zeros)
    assert np.array_equal(with_u0, no_ctrl)


def test_lqr_uninformative_sensor_gives_zero_policy():
    grid, record = _record()
    policy, value = lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[0.0]]),
                               1.0, record, (0.0, grid.time(80)))
    assert np.all(value.P == 0.0)
    assert np.all(value.s == 0.0)
    assert np.all(policy.evaluate(0.0, np.array([[3.0]])) == 0.0)


def test_lqr_gain_reaches_stationary_riccati_root():
    grid, record = _record(steps=1500, dt=0.01)
    _, value = lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[1.0]]),
                          1.0, record, (0.0, grid.time(1500)))
    # positive root of P^2 + 2P - 1 = 0
    assert value.P[0, 0, 0] == pytest.approx(np.sqrt(2.0) - 1.0, abs=1e-9)


def test_lqr_gains_symmetric_psd_multidim():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 3)) - 2.0 * np.eye(3)
    C = rng.normal(size=(2, 3))
    grid = TimeGrid(0.0, 0.01, 60)
    record = ObservationRecord.from_increments(grid, rng.normal(0, 0.1, (60, 2)))
    _, value = lqr_design(A, np.eye(3), C, 0.8, record, (0.0, 0.6))
    for P in value.P:
        assert np.array_equal(P, P.T)
        assert np.linalg.eigvalsh(P).min() >= -1e-12
    assert np.all(value.P[-1] == 0.0) and np.all(value.s[-1] == 0.0)


def _hjb_residual(dt, horizon=2.0):
    """Max PDE residual coefficient of the affine value function on a scalar grid.

    Uses a smooth observation drive (dY = sin(t) dt) so the residual
    measures the scheme's consistency rather than measurement roughness.
    """
    steps = int(round(horizon / dt))
    grid = TimeGrid(0.0, dt, steps)
    dy = np.sin(grid.times[:-1])[:, None] * dt
    record = ObservationRecord.from_increments(grid, dy)
    A, Q = -1.0, 1.0
    _, value = lqr_design(np.array([[A]]), np.eye(1), np.array([[1.0]]), 1.0,
                          record, (0.0, grid.time(steps)))
    P = value.P[:, 0, 0]
    s = value.s[:, 0]
    r = dy[:, 0] / dt
    dP = (P[2:] - P[:-2]) / (2 * dt)
    ds = (s[2:] - s[:-2]) / (2 * dt)
    Pm, sm = P[1:-1], s[1:-1]
    res_quad = 0.5 * dP + A * Pm - 0.5 * Pm ** 2 + 0.5 * Q
    res_lin = ds + A * sm - Pm * sm - r[1:]
    return max(np.abs(res_quad).max(), np.abs(res_lin).max())


def test_hjb_residual_first_order_in_dt():
    res_coarse = _hjb_residual(0.02)
    res_fine = _hjb_residual(0.01)
    assert res_fine < 0.75 * res_coarse
    assert res_coarse < 0.1   # O(dt) scale for O(1) coefficients


def test_policy_affine_in_state():
    grid, record = _record()
    policy, value = lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[1.0]]),
                               1.0, record, (0.0, grid.time(80)))
    t = grid.time(10)
    xs = np.array([[-2.0], [0.0], [1.0], [5.0]])
    u = policy.evaluate(t, xs)[:, 0]
    slopes = np.diff(u) / np.diff(xs[:, 0])
    assert np.allclose(slopes, -value.P[10, 0, 0], rtol=0, atol=1e-12)
    # second differences vanish: exactly affine
    assert np.allclose(np.diff(slopes), 0.0, atol=1e-12)


def test_ilqr_reproduces_lqr_on_linear_model():
    grid, record = _record(steps=50, dt=0.02)
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1.0)
    lqr_policy, lqr_value = lqr_design(np.array([[-1.0]]), np.eye(1),
                                       np.array([[1.0]]), 1.0, record, (0.0, 1.0))
    ilqr_policy, nominal = ilqr_design(model, obs, record, (0.0, 1.0),
                                       np.array([0.4]), iters=1)
    assert np.abs(ilqr_policy.value.P - lqr_value.P).max() < 1e-10
    assert np.abs(ilqr_policy.value.s - lqr_value.s).max() < 1e-10
    xs = np.array([[-1.0], [2.0]])
    assert np.allclose(ilqr_policy.evaluate(0.3, xs), lqr_policy.evaluate(0.3, xs),
                       atol=1e-10)


def test_benes_linearization_is_sech_squared():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=-5.0)
    model = benes_model(params)
    for x in (-3.0, 0.0, 0.7, 4.0):
        jac = model.drift_jacobian(0.0, np.array([x]))[0, 0]
        assert jac == pytest.approx(1.0 - np.tanh(x) ** 2, abs=1e-12)
        assert 0.0 < jac <= 1.0


def test_ilqr_line_search_cost_non_increasing():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=-5.0)
    model = benes_model(params)
    obs = benes_observation(params)
    rng = streams.generator(21, 9)
    grid = TimeGrid(0.0, 0.01, 100)
    truth = params.x0 + np.cumsum(rng.normal(0, 0.1, 100))
    dy = truth[:, None] * 0.01 + rng.normal(0, 0.1, (100, 1))
    record = ObservationRecord.from_increments(grid, dy)
    _, nominal = ilqr_design(model, obs, record, (0.0, 1.0), np.array([params.x0]),
                             iters=10)
    assert np.all(np.diff(nominal.cost_history) <= 0.0)
    assert len(nominal.cost_history) >= 2   # at least one accepted improvement


def test_ilqr_requires_constant_dispersion():
    params = BenesParams(mu=1.0, sigma_w=1.0, h1=1.0, h2=0.0, x0=0.0)
    model = benes_model(params)
    model.dispersion = lambda t, x: np.eye(1) * (1.0 + x[..., :1] ** 2)
    obs = benes_observation(params)
    grid, record = _record(steps=10, dt=0.01)
    with pytest.raises(ControlDesignError):
        ilqr_design(model, obs, record, (0.0, 0.1), np.array([0.0]), iters=1)


def test_riccati_blowup_raises_design_error():
    grid, record = _record(steps=10, dt=0.01)
    with pytest.raises(ControlDesignError):
        lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[1e200]]), 1e-200,
                   record, (0.0, 0.1))


def test_control_estimate_equal_weights_when_cost_is_flat():
    grid = TimeGrid(0.0, 0.01, 20)
    record = ObservationRecord.from_increments(grid, np.zeros((20, 1)))
    model = ou_model(0.0)
    obs = linear_observation(np.array([[0.0]]), 1.0)   # h = 0 and Y = 0: S = 0
    n = 4000
    est = path_integral_control_estimate(model, obs, record, ZeroPolicy(1), 0.0,
                                         np.array([0.3]), n, 0.2, seed=3)
    # correction is the mean of n i.i.d. N(0, dt) increments over dt
    assert abs(est[0]) < 3.0 / np.sqrt(n * grid.dt)


def test_control_estimate_recovers_lqr_feedback():
    grid, record = _record(seed=5, steps=60, dt=0.01, scale=1.0)
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1.0)
    lqr_policy, value = lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[1.0]]),
                                   1.0, record, (0.0, 0.6))
    x = np.array([0.8])
    target = lqr_policy.evaluate(0.0, x[None, :])[0, 0]
    n = 20_000
    est_zero = path_integral_control_estimate(model, obs, record, ZeroPolicy(1),
                                              0.0, x, n, 0.6, seed=1)
    # plain Monte Carlo scale for the weighted average of dW/dt
    mc_se = 1.0 / np.sqrt(n * grid.dt)
    assert abs(est_zero[0] - target) < 3 * mc_se

    est_lqr = path_integral_control_estimate(model, obs, record, lqr_policy,
                                             0.0, x, n, 0.6, seed=1)
    assert abs(est_lqr[0] - target) < 3 * mc_se


def test_control_estimate_variance_shrinks_with_better_policy():
    grid, record = _record(seed=6, steps=60, dt=0.01)
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1.0)
    lqr_policy, _ = lqr_design(np.array([[-1.0]]), np.eye(1), np.array([[1.0]]),
                               1.0, record, (0.0, 0.6))
    x0 = np.array([0.5])
    noise = streams.normal_block(9, (streams.CONTROL_EST, 0, 0, 60), (60, 3000, 1),
                                 scale=np.sqrt(grid.dt))
    from pipf.sde import simulate_ensemble
    var = {}
    for name, policy in (("zero", ZeroPolicy(1)), ("lqr", lqr_policy)):
        states, controls = simulate_ensemble(model, grid, 0, policy,
                                             np.broadcast_to(x0, (3000, 1)).copy(), noise)
        costs = window_cost_partials(obs, record, 0, states, controls, noise)[-1]
        w = np.exp(-(costs - costs.min()))
        var[name] = (w / w.sum()).var()
    assert var["lqr"] < var["zero"]


@pytest.mark.filterwarnings("ignore:divide by zero:RuntimeWarning",
                            "ignore:invalid value:RuntimeWarning")
def test_control_estimate_degenerate_weights():
    grid = TimeGrid(0.0, 0.01, 5)
    record = ObservationRecord.from_increments(grid, np.full((5, 1), 1.0))
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1e-300)
    with pytest.raises(DegenerateWeightsError):
        path_integral_control_estimate(model, obs, record, ZeroPolicy(1), 0.0,
                                       np.array([1.0]), 10, 0.05, seed=0)


def test_control_estimate_needs_two_rollouts():
    grid, record = _record(steps=5)
    model = ou_model(1.0)
    obs = linear_observation(np.array([[1.0]]), 1.0)
    with pytest.raises(UsageError):
        path_integral_control_estimate(model, obs, record, ZeroPolicy(1), 0.0,
                                       np.array([0.0]), 1, 0.1, seed=0)
