"""Exception hierarchy shared by the operator, problem and solver modules."""


class SbpError(Exception):
    pass


class UnsupportedOrder(SbpError, ValueError):
    pass


class GridTooSmall(SbpError, ValueError):
    pass


class InadmissiblePenalty(SbpError, ValueError):
    pass


class InadmissiblePenaltyWarning(UserWarning):
    pass


class NotSymmetric(SbpError, ValueError):
    pass


class DimensionMismatch(SbpError, ValueError):
    pass


class NonpositiveCoefficient(SbpError, ValueError):
    pass


class SingularMapping(SbpError, ValueError):
    pass


class SingularSystem(SbpError, ArithmeticError):
    pass


class NonPositiveEnergy(SbpError, ValueError):
    pass


class PowerIterationNoConverge(SbpError, RuntimeError):
    pass


class NonFiniteState(SbpError, RuntimeError):
    """Raised when an explicit integration produces inf/nan.

    ``step`` is the index of the first step whose result was not finite.
    """

    def __init__(self, step, time):
        super().__init__(f"non-finite state at step {step} (t={time:.6g})")
        self.step = step
        self.time = time
