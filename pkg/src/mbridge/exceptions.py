"""Exception hierarchy for mbridge."""


class MBridgeError(Exception):
    """Base class for all errors raised by this package."""


class MeasureError(MBridgeError, ValueError):
    """Invalid discrete measure input."""


class EmptySupport(MeasureError):
    pass


class NonPositiveWeight(MeasureError):
    pass


class NotNormalized(MeasureError):
    pass


class Infeasible(MBridgeError):
    """The pair is not in convex order, so no martingale coupling exists."""


class MeanMismatch(Infeasible, MeasureError):
    pass


class InfeasibleRow(Infeasible):
    """A row barycenter lies outside the closed hull of the target atoms."""


class NonConvergence(MBridgeError):
    pass


class AtomOutOfRange(MBridgeError, ValueError):
    pass


class ShapeMismatch(MBridgeError, ValueError):
    pass
