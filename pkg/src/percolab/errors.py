"""Exception types shared across the package."""


class PercolabError(Exception):
    """Base class for every error raised by percolab."""


class DomainError(PercolabError, ValueError):
    """An argument lies outside the domain of an operation."""


class OutOfRangeError(PercolabError, ValueError):
    """A size or radius exceeds what the (finite) host graph supports."""

    def __init__(self, message, maximum=None):
        super().__init__(message)
        self.maximum = maximum


class ParseError(PercolabError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapExceededError(PercolabError):
    """An exhaustive routine refused an instance above its enumeration cap."""

    def __init__(self, message, size, cap):
        super().__init__(f"{message} (size {size} > cap {cap})")
        self.size = size
        self.cap = cap


class ContractViolation(PercolabError):
    """A user-supplied event broke its measurability or monotonicity contract."""


class PreconditionError(PercolabError):
    """A documented precondition of an operation does not hold."""


class InfeasibleError(PercolabError, ValueError):
    """Parameter constraints cannot be satisfied."""


class ConfigError(PercolabError, ValueError):
    """Invalid experiment or environment configuration."""
