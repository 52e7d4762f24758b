"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: input problems exit 2, refused
budgets exit 3, broken invariants exit 4.
"""


class TdimvError(Exception):
    """Base class for all library errors."""


class InputError(TdimvError, ValueError):
    """Malformed or out-of-contract input."""


class DimensionError(InputError):
    """Vector, index or polynomial dimensions do not agree."""


class DomainError(InputError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateInputError(InputError):
    """Input that leaves nothing to work with (e.g. only constants)."""


class ParseError(InputError):
    """Text that does not follow one of the documented formats."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.reason = message


class BudgetExceeded(TdimvError):
    """An enumeration or memory budget would be exceeded; the work was refused."""

    def __init__(self, message: str, progress: str | None = None):
        text = message if progress is None else f"{message} (progress: {progress})"
        super().__init__(text)
        self.progress = progress


class InvariantViolation(TdimvError, AssertionError):
    """An internal consistency check failed; signals an implementation bug."""


class NotTdiError(InvariantViolation):
    """A system failed the translation decomposition F(x+xi) = C F(x) + c0."""


class CertificationError(InvariantViolation):
    """A witness search that must succeed came up empty."""
