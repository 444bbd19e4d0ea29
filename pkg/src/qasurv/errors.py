"""Exception hierarchy shared by every qasurv module."""


class QasurvError(Exception):
    """Base class for all errors raised by qasurv."""


class InvalidInputError(QasurvError, ValueError):
    """Arguments violate an operation's preconditions."""


class DegenerateCovariateError(InvalidInputError):
    """A covariate carries too little variation to be modelled."""

    def __init__(self, covariate, message=None):
        self.covariate = covariate
        super().__init__(message or f"degenerate covariate: {covariate!r}")


class DomainError(InvalidInputError):
    """A value lies outside the domain of a transform (e.g. log of 0)."""


class NonIdentifiableError(QasurvError):
    """The model information matrix is singular."""


class InvalidStateError(QasurvError, RuntimeError):
    """An object is not in a state that allows the requested operation."""


class DumpParseError(QasurvError):
    """Malformed XML in a data dump."""

    def __init__(self, message, byte_offset):
        self.byte_offset = byte_offset
        super().__init__(f"{message} (byte offset {byte_offset})")


class InvalidRowError(InvalidInputError):
    """A question cannot produce a valid feature row and must be excluded."""


class SchemaError(InvalidInputError):
    """Feature data and a stored model artifact disagree on columns."""
