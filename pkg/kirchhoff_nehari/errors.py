"""
Exception hierarchy for the kirchhoff-nehari package.

Every error derives from :class:`KirchhoffNehariError` and additionally from the
builtin a caller would naturally catch: ``ValueError`` for rejected input and
``RuntimeError`` for computations that could not be completed.
"""

from typing import Any, Optional


class KirchhoffNehariError(Exception):
    """Base class for all package errors."""


class InvalidFieldError(KirchhoffNehariError, ValueError):
    """A field has the wrong shape or contains non-finite samples."""


class InvalidExponentError(KirchhoffNehariError, ValueError):
    """A Lebesgue exponent outside the admissible range was requested."""


class GridMismatchError(KirchhoffNehariError, ValueError):
    """Two fields (or a field and a problem) live on different grids."""


class AssumptionViolation(KirchhoffNehariError, ValueError):
    """A structural hypothesis on the data is violated.

    Attributes:
        hypothesis (str): Label of the violated hypothesis, e.g. ``"V2"``.
    """

    def __init__(self, message: str, hypothesis: str):
        super().__init__(f"({hypothesis}) {message}")
        self.hypothesis = hypothesis


class InvalidFamilyError(KirchhoffNehariError, ValueError):
    """Unknown Kirchhoff family or parameters outside the family's range."""


class InvalidProblemError(KirchhoffNehariError, ValueError):
    """A problem instance violates its own admissibility constraints."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class UnsupportedCheckError(KirchhoffNehariError, ValueError):
    """A check needs information (e.g. potential gradients) that is unavailable."""


class UndefinedOnOriginError(KirchhoffNehariError, ValueError):
    """The quantity is not defined at the zero state."""


class PreconditionError(KirchhoffNehariError, ValueError):
    """The input state does not satisfy an operation's precondition."""


class WrongRegimeError(KirchhoffNehariError, ValueError):
    """The operation only applies to a different exponent regime."""


class ConfigError(KirchhoffNehariError, ValueError):
    """A configuration file could not be parsed or failed validation.

    Attributes:
        line (int, optional): 1-based line of the offending node.
        column (int, optional): 1-based column of the offending node.
    """

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        source: Optional[str] = None,
    ):
        self.line = line
        self.column = column
        self.source = source
        location = ""
        if line is not None:
            location = f"line {line}"
            if column is not None:
                location += f", column {column}"
            if source:
                location = f"{source}: {location}"
            location += ": "
        super().__init__(f"{location}{message}")


class ExpressionError(ConfigError):
    """An expression string is outside the supported arithmetic grammar."""


class ProjectionFailure(KirchhoffNehariError, RuntimeError):
    """No sign change of the fiber derivative was found on the admissible range."""


class SolverStall(KirchhoffNehariError, RuntimeError):
    """The descent could not make progress.

    Attributes:
        report: The partial :class:`~kirchhoff_nehari.solver.SolveReport`
            describing the run up to the stall.
    """

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
