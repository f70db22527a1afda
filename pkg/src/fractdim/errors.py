"""Exception types shared across the package.

The CLI maps these onto exit codes: SchemaError -> 2, PreconditionError
(and subclasses) -> 3, failed run assertions -> 1.
"""


class FractdimError(Exception):
    """Base class for all package errors."""


class SchemaError(FractdimError):
    """Config file is structurally invalid (unknown key, wrong type, bad version)."""


class PreconditionError(FractdimError, ValueError):
    """An operation was called outside its documented domain."""


class AlphabetMismatchError(PreconditionError):
    """A word contains symbols outside the declared alphabet."""


class WordTooShortError(PreconditionError):
    """A finite word is too short to decide the requested quantity."""

    def __init__(self, message, required_length):
        super().__init__(message)
        self.required_length = int(required_length)


class BudgetExceededError(FractdimError):
    """An enumeration would exceed the configured node budget."""


class EstimationError(FractdimError):
    """A statistical estimate cannot be formed from the data given."""
