"""Exception hierarchy shared by all sispatch modules."""


class SisError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SisError, ValueError):
    """An input violates a structural assumption of the model."""

    assumption = ""


class NegativeOffDiagonal(ValidationError):
    assumption = "A1"


class ColumnSumNonzero(ValidationError):
    assumption = "A1"


class Reducible(ValidationError):
    assumption = "A1"


class ScenarioInvalid(ValidationError):
    """Scenario-level invariant (initial data or rates) violated."""

    def __init__(self, message, assumption=""):
        super().__init__(message)
        self.assumption = assumption


class NotQuasiPositive(SisError, ValueError):
    pass


class NotLineSumSymmetric(SisError, ValueError):
    pass


class ConvergenceFailure(SisError, ArithmeticError):
    pass


class NonFiniteState(SisError, ArithmeticError):
    pass


class StepSizeUnderflow(SisError, ArithmeticError):
    pass


class ZeroComponent(SisError, ArithmeticError):
    pass


class InfeasibleNumerics(SisError, ArithmeticError):
    pass


class KindMismatch(SisError, ValueError):
    pass


class RegimeMismatch(SisError, ValueError):
    pass


class ScenarioMismatch(SisError, ValueError):
    pass


class ParseError(SisError, ValueError):
    pass
