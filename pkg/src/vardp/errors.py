"""Exception types raised by the solvers and simulator."""


class VardpError(Exception):
    """Base class for all package errors."""


class ParameterError(VardpError, ValueError):
    """Invalid parameters: non-SPD precision, bad shapes, non-positive temperature."""


class SPDError(ParameterError):
    """A precision matrix lost positive definiteness during the backward pass.

    ``iteration`` is the inner fixed-point sweep (0 for the initialization) and
    ``stage`` the time index when known.
    """

    def __init__(self, message, iteration=None, stage=None):
        super().__init__(message)
        self.iteration = iteration
        self.stage = stage


class CapabilityError(VardpError):
    """The model lacks a derivative required by the selected mode."""


class GridCoverageError(VardpError):
    """Transition mass leaves the tabulation grid."""


class DivergenceError(VardpError):
    """A simulated trajectory became non-finite."""

    def __init__(self, message, step=None, seed=None):
        super().__init__(message)
        self.step = step
        self.seed = seed

