"""Exception hierarchy shared across the pipeline."""


class CaptreeError(Exception):
    """Base class for all pipeline errors."""


class BackendError(CaptreeError):
    """Base class for inference backend failures."""


class TransportError(BackendError):
    """Remote backend unreachable after all retry attempts."""


class MalformedResponse(BackendError):
    """Backend answered, but the body violates the wire contract."""


class BackendRefusal(BackendError):
    """Backend explicitly refused the request via the error channel."""


class CoverageGap(CaptreeError):
    """Some frame index is covered by no embedding window."""


class DimensionMismatch(CaptreeError):
    """Vectors of unequal dimension where equal dimension is required."""


class EmptySequence(CaptreeError):
    """An operation requiring at least one frame received none."""


class MissingPlaceholder(CaptreeError):
    """A prompt template placeholder has no value."""


class SchemaViolation(CaptreeError):
    """Model output failed JSON parsing or schema validation."""


class TooFewPoints(CaptreeError):
    """Fewer distinct points than requested clusters."""


class StageError(CaptreeError):
    """A pipeline stage could not complete for one video."""
