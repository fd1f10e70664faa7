"""Exception types shared across the package."""


class BvLimitError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BvLimitError):
    pass


class NotSymmetric(BvLimitError):
    pass


class NotPositiveDefinite(BvLimitError):
    pass


class NoConvergence(BvLimitError):
    pass


class OutOfRange(BvLimitError):
    pass


class ConstructionFailed(BvLimitError):
    """Potential construction violated one of its verified conditions.

    Carries a human-readable description of the failed condition and, when
    applicable, the offending location.
    """


class BlowUp(BvLimitError):
    """Trajectory left the safety box; ``t_exit`` records when."""

    def __init__(self, message, t_exit=None):
        super().__init__(message)
        self.t_exit = t_exit


class StepUnderflow(BvLimitError):
    pass


class MissingVelocities(BvLimitError):
    pass


class TooFewPoints(BvLimitError):
    pass


class NotAnEquilibrium(BvLimitError):
    pass


class NotDescent(BvLimitError):
    pass


class Escaped(BvLimitError):
    pass


class NoSettle(BvLimitError):
    pass


class ChainStuck(BvLimitError):
    """Chain assembly found no admissible link; carries the partial chain."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DidNotConverge(BvLimitError):
    """Optimizer made no progress from any restart; carries best-so-far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(BvLimitError):
    pass
