"""Exception hierarchy shared across the pipeline."""


class CharsegError(Exception):
    """Base class for all package errors."""


# --- annotation I/O ---

class ParseError(CharsegError):
    """Manifest file could not be parsed at all."""


class SchemaError(CharsegError):
    """Manifest parsed but a required field is missing or the version is unknown."""


class ValidationError(CharsegError):
    """Manifest content violates an invariant (empty transcription, degenerate quad)."""


class ExportError(CharsegError):
    """Mask/annotation export failed at the filesystem level."""


# --- raster primitives ---

class InsufficientPeaks(CharsegError):
    """Watershed could not find k NMS-surviving score maxima in the domain."""


class ShapeMismatch(CharsegError):
    """Two rasters that must share dimensions do not."""


# --- glyph engine ---

class FontLoadError(CharsegError):
    """Font file missing or unreadable."""


class MissingGlyph(CharsegError):
    """Font lacks the requested character or renders it empty."""


class EmptyTemplateSet(CharsegError):
    """Vote table requested for zero templates."""


class InsufficientFonts(CharsegError):
    """Fewer than two usable fonts available for a template bank."""


class UnknownCategory(CharsegError):
    """Template bank has no table for the requested character category."""


# --- refinement ---

class AlignmentFailed(CharsegError):
    """Recognized lengths cannot be reconciled with the transcription length."""


class RefinementFailed(CharsegError):
    """All box-refinement fallbacks exhausted for one word."""


# --- backends ---

class BackendUnavailable(CharsegError):
    """Model backend unreachable after retries."""


class ProtocolError(CharsegError):
    """Remote backend returned a malformed or invariant-violating response."""


# --- evaluation / pipeline ---

class EmptyInput(CharsegError):
    """Aggregate requested over zero items."""


class MissingPair(CharsegError):
    """Prediction/ground-truth directories disagree on an image id."""


class ConfigError(CharsegError):
    """Run configuration is invalid."""
