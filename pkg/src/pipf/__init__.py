"""Sliding-window path-integral particle filtering.

A particle filter for continuous-time diffusions with continuous-time
measurements that re-solves a smoothing problem over a short sliding
window at every step, sampling trajectory proposals from a feedback
controller (zero, window LQR, or iLQR) and correcting them by exact
importance weights. Ships with a SIR baseline, exact Kalman-Bucy and
Benes-type reference filters, evaluation metrics, and a benchmark CLI.
"""

from .baselines import (BenesParams, BenesPosterior, KalmanBucyState, benes_density,
                        benes_posterior, benes_posterior_series, kalman_bucy_run,
                        kalman_bucy_step, sir_run, sir_step)
from .config import ExperimentConfig, benes_defaults, load, parse, serialize
from .control import (AffinePolicy, AffineValueFunction, NominalTrajectory, ZeroPolicy,
                      ilqr_design, lqr_design, path_integral_control_estimate)
from .engine import (FilterOutput, SmoothingResult, WeightedEnsemble, WindowState,
                     effective_ratio, multinomial_resample, pipf_run, pipf_window_step,
                     smoothing_posterior)
from .errors import (ConfigError, ControlDesignError, DegenerateWeightsError,
                     ModelDefinitionError, NumericalError, OracleFailureError,
                     PipfError, SimulationBlowupError, UsageError)
from .metrics import (KdeEstimate, MetricSeries, ensemble_moments, kde,
                      l1_density_distance, mse_series)
from .observation import (ObservationModel, ObservationRecord, PathCost,
                          generate_observations, running_cost_increment,
                          step_log_likelihoods, terminal_cost, window_cost)
from .sde import (DiffusionModel, NoisePath, StatePath, TimeGrid, draw_noise_path,
                  euler_maruyama_step, sample_initial, simulate_path)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
