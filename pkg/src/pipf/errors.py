"""Exception taxonomy shared by all modules.

Errors split into two families: usage/definition problems (caller bugs,
bad configuration) and numerical failures encountered mid-run (blow-ups,
degenerate weights, oracle breakdown). The CLI maps the former to exit
code 2 and the latter to exit code 3.
"""


class PipfError(Exception):
    """Base class for all library errors."""


class ModelDefinitionError(PipfError):
    """A model is inconsistent: dimension mismatch, non-SPD covariance, ..."""


class UsageError(PipfError):
    """An operation was called with arguments outside its contract."""


class ConfigError(PipfError):
    """Bad experiment configuration (unknown scenario, invalid field, ...)."""


class NumericalError(PipfError):
    """Base class for failures detected while running."""


class SimulationBlowupError(NumericalError):
    """A simulated state became non-finite."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class DegenerateWeightsError(NumericalError):
    """All particle weights underflowed to zero."""


class ControlDesignError(NumericalError):
    """A backward pass produced non-finite gains (try a smaller dt)."""


class OracleFailureError(NumericalError):
    """An exact reference filter lost validity (e.g. covariance not SPD)."""
