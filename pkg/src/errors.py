"""Exception hierarchy shared by every module.

``InputError`` subclasses signal a violated precondition (the CLI exits with 2),
``NumericalError`` subclasses signal a failed computation (the CLI exits with 3).
"""

from typing import Optional


class CriticalityError(Exception):
    """Base class for all errors raised by this package"""


class InputError(CriticalityError, ValueError):
    """A precondition on the inputs does not hold"""


class NumericalError(CriticalityError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer"""


# Input errors
class NonSymmetricInput(InputError):
    pass


class NonPositiveMass(InputError):
    pass


class MarkedPointOffGrid(InputError):
    pass


class UnsupportedDimension(InputError):
    pass


class NegativeDensity(InputError):
    pass


class EmptyNegativePart(InputError):
    pass


class RecurrentForm(InputError):
    """The Green operator does not exist because the form has no killing"""


class RecurrentPositivePart(InputError):
    """E^{mu+} has a zero-energy kernel, so the gauge is undefined"""


class ConservativeChain(InputError):
    pass


class BandwidthTooSmall(InputError):
    pass


class SingularResolvent(InputError):
    pass


class ParseError(InputError):
    """Spec file syntax or validation error, tagged with the offending line"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# Numerical errors
class SingularReduction(NumericalError):
    pass


class LPSolverFailure(NumericalError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class DegenerateGroundState(NumericalError):
    pass
