"""Exception types raised by the engine."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateStateError(ValueError):
    """A preparation or normalizer vanishes, so no state can be formed."""


class SizeError(ValueError):
    """Requested oracle problem exceeds the desk-scale dimension budget."""


class AccuracyError(RuntimeError):
    """Quadrature failed to reach the requested tolerance.

    The attained error estimate is kept on ``estimate`` so callers can decide
    whether the value is still usable.
    """

    def __init__(self, message, estimate=None, value=None):
        super().__init__(message)
        self.estimate = estimate
        self.value = value
