"""Exception types that map onto distinct CLI exit codes."""


class BalsimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(BalsimError):
    """Invalid configuration value, file, or combination (exit code 2)."""


class IngestError(BalsimError):
    """Malformed or unreadable input trace (exit code 3)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OracleLimitError(BalsimError):
    """Exact-solver instance exceeds its declared size limit (exit code 4)."""


class InfeasibleError(BalsimError):
    """No assignment satisfies the capacity constraints."""
