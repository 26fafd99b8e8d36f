"""Exception types shared across the toolkit."""


class MaserSenseError(Exception):
    """Base class for all toolkit errors."""


class DomainError(MaserSenseError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class IntegrationError(MaserSenseError, RuntimeError):
    """The ODE integrator could not continue."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6e} s")
        self.time = time


class FitError(MaserSenseError, RuntimeError):
    """A least-squares fit could not be set up."""


class GridMismatchError(MaserSenseError, ValueError):
    """Two sampled quantities do not share the same axis."""


class ConfigError(MaserSenseError, ValueError):
    """A run configuration failed validation; ``errors`` lists every problem.

    ``io`` marks failures to read the file at all, as opposed to bad content.
    """

    def __init__(self, errors: list[str], io: bool = False):
        self.errors = list(errors)
        self.io = io
        super().__init__("; ".join(self.errors))


class InputError(MaserSenseError, ValueError):
    """An input data file is missing, unreadable or malformed."""
