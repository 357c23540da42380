"""Exception types shared across the package."""


class EcoSearchError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(EcoSearchError):
    """File does not start with the expected magic bytes or version."""


class CorruptionError(EcoSearchError):
    """File payload is truncated or inconsistent with its header."""


class DegenerateVectorError(EcoSearchError):
    """A vector has zero norm and cannot be normalized."""

    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm and no direction")
        self.row = row


class MetadataParseError(EcoSearchError):
    """A metadata line could not be parsed."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number


class CoordinateRangeError(EcoSearchError):
    """Latitude or longitude outside its valid range."""


class AlignmentError(EcoSearchError):
    """Embedding row count and metadata record count disagree."""


class DuplicateIdError(EcoSearchError):
    """Observation ids must be unique within a corpus."""


class CapacityError(EcoSearchError):
    """More clusters requested than training vectors available."""


class ShapeError(EcoSearchError):
    """Vector dimensionality mismatch."""


class NormalizationError(EcoSearchError):
    """Query vector is not unit-normalized."""


class EncoderUnavailableError(EcoSearchError):
    """Remote encoder endpoint unreachable or timed out."""


class EncoderConfigurationError(EcoSearchError):
    """Encoder backend returned a vector inconsistent with its configuration."""


class SessionNotFoundError(EcoSearchError):
    """No session with the requested id."""


class InvalidMarkError(EcoSearchError):
    """Mark refers to an observation never surfaced in this session."""


class EmptyExportError(EcoSearchError):
    """Session has no result page to export."""


class EmptyDenominatorError(EcoSearchError):
    """All category counts are zero."""


class DegenerateSeriesError(EcoSearchError):
    """Monthly series has no usable rate in any month."""
