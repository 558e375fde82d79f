"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` and numerical
breakdowns from :class:`NumericalFailure`; the command line maps the two
families to distinct exit codes.
"""


class SpikeClusterError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SpikeClusterError, ValueError):
    """Inputs violate a documented precondition."""


class NumericalFailure(SpikeClusterError, RuntimeError):
    """A solver or quadrature could not deliver the requested accuracy."""


# ground profile
class NoGroundState(NumericalFailure):
    pass


class ToleranceNotReached(NumericalFailure):
    pass


class NoPlateau(NumericalFailure):
    pass


class DivergentIntegral(ValidationError):
    pass


class NondegeneracyFailed(NumericalFailure):
    pass


# potential / configurations
class NotASaddle(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# reduced model
class NotAdmissible(UserWarning):
    """Warning category: configuration lies outside the admissible set."""


class BadShape(ValidationError):
    pass


class NoOppositePair(ValidationError):
    pass


class NotConverged(NumericalFailure):
    pass


class LeftDomain(NumericalFailure):
    pass


class EmptyFamily(NumericalFailure):
    pass


# grid problems
class SpikeNearBoundary(ValidationError):
    pass


class UnderResolved(ValidationError):
    pass


class LinearSolveStagnation(NumericalFailure):
    pass


class NewtonDiverged(NumericalFailure):
    pass


class TrivialCollapse(NumericalFailure):
    pass


# equilibrium checker
class TooClose(ValidationError):
    pass


# io
class CacheMiss(SpikeClusterError):
    pass
