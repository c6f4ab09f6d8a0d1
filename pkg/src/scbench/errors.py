"""Exception types shared across the bench.

The CLI maps these onto exit codes: validation and format problems exit
with 2, transport and protocol failures with 3, broken invariants with 4.
"""


class ValidationError(ValueError):
    """Bad configuration or input values."""


class FormatError(ValidationError):
    """Malformed artifact file. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EnumerationBoundError(ValidationError):
    """Grid too large for exhaustive mask enumeration."""


class ResourceError(RuntimeError):
    """A computed resource requirement exceeds the configured budget."""


class TransportError(RuntimeError):
    """Remote scorer unreachable, timed out, or returned an HTTP failure."""


class ProtocolError(RuntimeError):
    """Remote scorer replied with a payload the protocol does not allow."""


class ContractViolationError(RuntimeError):
    """A scorer reply violated the probability-distribution contract."""
