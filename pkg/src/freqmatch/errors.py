"""Exception hierarchy shared across the package."""


class FreqmatchError(Exception):
    """Base class for every error raised by freqmatch."""


class DomainError(FreqmatchError, ValueError):
    """An input lies outside the domain of an operation (non-finite, shape mismatch, zero norm)."""


class ConfigError(FreqmatchError, ValueError):
    """Invalid or inconsistent configuration."""


class EmptyForeground(FreqmatchError):
    """A mask selects no pixels where at least one is required."""


class ZeroPrototype(DomainError):
    """The support prototype is the zero vector, so cosine similarity is undefined."""


class ContractError(FreqmatchError, RuntimeError):
    """A caller violated an API contract (e.g. backward on a non-scalar)."""


class ParseError(FreqmatchError, ValueError):
    """A binary container could not be decoded."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersion(ParseError):
    """A binary container carries a format version this build cannot read."""


class TrainingError(FreqmatchError, RuntimeError):
    """Training was aborted, e.g. because a gradient became non-finite."""
