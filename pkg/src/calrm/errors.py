class CalrmError(Exception):
    """Base class for all library errors."""


class ValidationError(CalrmError, ValueError):
    pass


class ParseError(CalrmError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ConditioningOnNull(CalrmError):
    """Raised when conditioning on a demand value of probability zero."""


class InvalidTarget(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class PreconditionViolated(CalrmError):
    pass


class UnknownName(CalrmError, KeyError):
    pass


class ParamOutOfRange(ValidationError):
    pass


class NumericalBreakdown(CalrmError, ArithmeticError):
    pass


class StateSpaceTooLarge(CalrmError):
    def __init__(self, required: int, cap: int):
        super().__init__(f"DP needs {required} states, cap is {cap}")
        self.required = required
        self.cap = cap


class EnumerationTooLarge(CalrmError):
    pass


class TooManyProducts(CalrmError):
    pass


class GammaOutOfRange(ValidationError):
    pass


class DegenerateDenominator(CalrmError, ZeroDivisionError):
    pass


class EpsilonZero(CalrmError):
    """The asymptotic tuning rule needs every transition probability positive."""
