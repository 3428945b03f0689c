"""Exception hierarchy shared by every igflow module."""


class IGFlowError(Exception):
    """Base class for all library errors."""


class DomainError(IGFlowError, ValueError):
    """A point lies outside the manifold (or field) domain."""


class NonFinite(IGFlowError, ArithmeticError):
    """A coordinate map produced NaN or infinity."""


class SingularMetric(IGFlowError, ArithmeticError):
    """A metric failed the symmetric positive-definite test."""


class IdentifiabilityError(IGFlowError, ValueError):
    """Sufficient statistics of a finite family are degenerate."""


class DomainExit(IGFlowError):
    """An integrated flow left the domain.

    ``partial`` holds the trajectory computed up to the last valid sample.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StepLimit(IGFlowError):
    """The integrator hit ``max_steps`` before reaching the end of the span."""


class TurningPointError(IGFlowError, ValueError):
    """E - U(q) <= 0 where a Jacobi-Maupertuis metric was requested."""


class NonMonotone(IGFlowError, ValueError):
    """A trajectory parameter is not strictly monotone."""


class GridMismatch(IGFlowError, ValueError):
    """Two trajectories do not share a time grid."""


class TooFewSamples(IGFlowError, ValueError):
    """A finite-difference validator needs more samples."""


class ModelMismatch(IGFlowError, ValueError):
    """A check was applied to a trajectory from the wrong model or flow."""


class UnknownModel(IGFlowError, KeyError):
    """Model id is not recognised."""


class TimeMapUndefined(IGFlowError, ValueError):
    """The closed-form time map is singular at the given state."""
