"""Experiment configuration: dataclass, JSON round-trip, scenario defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCENARIOS = ("ou", "linear_nd", "benes")
CONTROLLERS = ("zero", "lqr", "ilqr")
RESAMPLERS = ("multinomial", "systematic")


@dataclass
class ExperimentConfig:
    """Everything a benchmark run depends on; round-trips through JSON."""

    scenario: str = "ou"
    # linear model parameters
    kappa: float = 1.0
    sigma_b: float = 1.0
    m0: float = 0.0
    p0: float = 1.0
    # saturating-drift model parameters
    mu: float = 1.0
    h1: float = 1.0
    h2: float = 0.0
    sigma_w: float = 1.0
    x0: float = -5.0
    init_spread: float = 1e-3
    # discretization and filter settings
    l_steps: int = 600
    dt: float = 0.01
    k_particles: int = 500
    h_window: int = 20
    controller: str = "lqr"
    gamma_thres: float = 0.5
    resampling: bool = True
    resampler: str = "multinomial"
    ilqr_iters: int = 10
    # experiment protocol
    trials: int = 50
    seed: int = 0
    out: str = "results.csv"
    h_list: list[int] = field(default_factory=lambda: [1, 5, 20, 100])
    n_list: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    snapshot_times: list[float] = field(default_factory=lambda: [2.0, 4.0, 6.0])
    density_grid_lo: float = -16.0
    density_grid_hi: float = 10.0
    density_grid_points: int = 1301
    kde_bandwidth: float = 0.2

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}")
        if self.resampler not in RESAMPLERS:
            raise ConfigError(f"unknown resampler {self.resampler!r}")
        if self.dt <= 0 or self.l_steps < 1:
            raise ConfigError("need dt > 0 and at least one step")
        if self.k_particles < 1 or self.h_window < 1:
            raise ConfigError("particle count and window size must be positive")
        if self.trials < 1:
            raise ConfigError("need at least one trial")
        if self.sigma_b <= 0 or self.p0 <= 0 or self.sigma_w <= 0:
            raise ConfigError("noise scales and prior variance must be positive")
        if not 0.0 <= self.gamma_thres <= 1.0:
            raise ConfigError("gamma_thres must lie in [0, 1]")
        if self.ilqr_iters < 1:
            raise ConfigError("ilqr_iters must be positive")
        return self


def benes_defaults(**overrides) -> ExperimentConfig:
    """Nonlinear benchmark defaults: L=6000, dt=0.001, H=10, iLQR proposal."""
    base = dict(scenario="benes", l_steps=6000, dt=0.001, h_window=10,
                controller="ilqr", trials=5)
    base.update(overrides)
    return ExperimentConfig(**base).validate()


def serialize(config: ExperimentConfig) -> str:
    return json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True)


def parse(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**data).validate()


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse(text)
