"""Exception hierarchy for momole."""


class MomoleError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MomoleError, ValueError):
    """Array shapes do not agree."""


class NotSymmetricError(MomoleError, ValueError):
    """A covariance matrix is not symmetric."""


class NotPositiveDefiniteError(MomoleError, ValueError):
    """A covariance matrix fails the positive-definiteness gate."""


class GateEvaluationError(MomoleError, ArithmeticError):
    """Every gate numerator vanished, so the gate cannot be normalised."""


class InvalidGateError(MomoleError, ValueError):
    """Gate parameters violate their invariants."""


class GateKindError(MomoleError, TypeError):
    """An operation requires a Gaussian gate but received another kind."""


class NotStarredError(MomoleError, ValueError):
    """An operation requires zero expert slopes."""


class CapacityError(MomoleError, ValueError):
    """A construction would exceed the component-count limit."""


class NonPositiveDensityError(MomoleError, ArithmeticError):
    """A density evaluated to zero (or below) where positivity is required."""


class NonFiniteError(MomoleError, ArithmeticError):
    """A function or likelihood produced a non-finite value."""


class InsufficientDataError(MomoleError, ValueError):
    """Too few samples for the requested number of components."""


class SchemaError(MomoleError, ValueError):
    """A serialized model or config is malformed.

    Parameters
    ----------
    path : str
        Dotted path of the offending field, e.g. ``gate.weights``.
    message : str
        Human-readable description.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
