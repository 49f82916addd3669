"""Exception hierarchy shared across the package."""


class TechflowError(Exception):
    """Base class for all package errors."""


class ContractError(TechflowError):
    """An operation was called with arguments violating its contract
    (shape mismatch, out-of-range index, bad configuration value)."""


class ScoreValidationError(TechflowError):
    """A score or technique sequence violates a structural invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParseError(TechflowError):
    """A file could not be parsed; message carries path and line number."""


class NumericError(TechflowError):
    """A numeric computation produced non-finite values."""
