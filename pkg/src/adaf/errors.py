"""Exception types shared across the package."""


class AdafError(Exception):
    """Base class for all package errors."""


class DecodeError(AdafError):
    """Malformed audio container or data chunk."""


class UnsupportedFormatError(AdafError):
    """Audio encoding we deliberately do not handle."""


class ShapeError(AdafError):
    """Operand shapes do not conform."""


class TooShortError(AdafError):
    """Clip shorter than one patch."""


class ContractError(AdafError):
    """API contract violated (e.g. backward on a non-scalar)."""


class ValidationError(AdafError):
    """Bad configuration or spec file; message names the field."""


class UnsupportedAnalysisError(AdafError):
    """Analysis requested for a model kind that cannot provide it."""


class AlignmentError(AdafError):
    """Metric logs do not share an epoch axis."""


class NoPositivesError(AdafError):
    """Ranking metric asked to score targets with no positive labels."""
