"""Exception types raised by the threshold-dynamics backends."""


class ThresholdDynamicsError(Exception):
    """Base class for all package errors."""


class NoBracket(ThresholdDynamicsError):
    """No sign change of the stage value was found near the root guess.

    Usually means the interface left the search window: the kernel width is
    too large for the graph, or the graph is about to change topology.
    """

    def __init__(self, message, stage=None, points=None):
        super().__init__(message)
        self.stage = stage
        self.points = points


class OutOfDomain(ThresholdDynamicsError):
    """A graph was sampled where its boundary rule cannot extend it."""


class InvalidGamma(ThresholdDynamicsError, ValueError):
    """A stage-coefficient matrix violates the row-sum constraint."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DegenerateScheme(ThresholdDynamicsError):
    """The scheme's time-rescaling coefficient vanishes."""


class Blowup(ThresholdDynamicsError):
    """The explicit PDE integrator diverged."""


class Extinct(ThresholdDynamicsError):
    """A shrinking circle or sphere has already vanished."""
