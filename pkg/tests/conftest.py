import numpy as np
import pytest

from pipf.harness import make_truth_and_record
from pipf.models import linear_observation, ou_model
from pipf.sde import TimeGrid


class ZeroRng:
    """Stands in for a Generator when a test needs noise-free draws."""

    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.zeros(size) if size is not None else 0.0


@pytest.fixture
def ou_setup():
    """Standard scalar test problem: OU dynamics, identity sensor, unit noise."""

    def build(kappa=1.0, m0=0.0, p0=1.0, sigma_b=1.0, dt=0.01, steps=50, seed=0, trial=0):
        model = ou_model(kappa, m0, p0)
        obs = linear_observation(np.array([[1.0]]), sigma_b)
        grid = TimeGrid(0.0, dt, steps)
        truth, record = make_truth_and_record(model, obs, grid, seed, trial)
        return model, obs, grid, truth, record

    return build
