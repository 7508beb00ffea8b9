"""
Exception hierarchy for sawstrip.

Every numerical failure raises one of these; the CLI maps the families to
exit codes (see ``sawstrip.cli.main.EXIT_CODES``).
"""


class SawStripError(Exception):
    """Base class for all sawstrip errors."""


class ConfigError(SawStripError):
    """Invalid lattice/mode combination or out-of-range parameter."""


class ResourceError(SawStripError):
    """A request that cannot be served within the configured limits."""


class WidthLimitError(ResourceError):
    """Strip too wide for the packed signature representation."""


class BudgetExceededError(ResourceError):
    """Estimated memory or signature count above the configured budget."""

    def __init__(self, message: str, estimate: dict | None = None):
        super().__init__(message)
        self.estimate = estimate or {}


class EngineError(SawStripError):
    """Internal consistency violation inside the transfer-matrix sweep."""


class TruncationMismatchError(SawStripError):
    """Polynomial operands carry different truncation degrees."""


class ConstantTermError(SawStripError):
    """Division by y requested for a polynomial with a constant term."""


class CountOverflowError(SawStripError):
    """Exact walk counts would not fit the integer payload."""


class CrossingError(SawStripError):
    """Root bracketing failed (no sign change in the bracket)."""


class ExtrapolationError(SawStripError):
    """Sequence too short or every accelerated entry invalidated."""


class DensityUndefinedError(SawStripError):
    """Partition function vanishes, contact density undefined."""


class IdentityError(SawStripError):
    """Identity check requested on data not built at the critical point."""


class CheckpointError(SawStripError):
    """Checkpoint file unreadable or built for a different strip."""


class ReferenceDataError(SawStripError):
    """Embedded reference table missing or not matching its checksum."""
