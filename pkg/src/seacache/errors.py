"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration value; message names the offender."""


class StaleEvictionSetError(RuntimeError):
    """An eviction set built under an older key epoch was replayed after re-keying."""


class TraceParseError(ValueError):
    """Malformed trace record; carries the 1-based record number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"record {line_number}: {message}")
        self.line_number = line_number
