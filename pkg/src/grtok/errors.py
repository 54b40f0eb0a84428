"""Exception types raised across the package.

The CLI maps any ``GrtokError`` to exit code 1 with a stage-tagged message;
everything else is a genuine bug and is allowed to traceback.
"""


class GrtokError(Exception):
    """Base class for all expected failure modes."""


# --- ingest ---------------------------------------------------------------

class MissingFile(GrtokError):
    """A manifest, frame file, or raw blob does not exist."""


class MalformedManifest(GrtokError):
    """Manifest JSON is unreadable or violates the documented schema."""


class DimensionMismatch(GrtokError):
    """Decoded data disagrees with declared dimensions, or two
    distributions/arrays that must align do not."""


class UpsampleRequested(GrtokError):
    """Resample target FPS exceeds the native FPS."""


class AlreadyGrayscale(GrtokError):
    """Grayscale conversion requested on a single-channel frame."""


class IndivisibleDimensions(GrtokError):
    """Frame width or height is not divisible by the patch size."""


class EmptySequence(GrtokError):
    """An operation requires at least one frame."""


# --- pixel coding ---------------------------------------------------------

class ShapeMismatch(GrtokError):
    """Two patches, grids, or frames that must share a shape do not."""


class OffsetOutOfRange(GrtokError):
    """Reconstruction offset outside [0, residual count]."""


# --- tokenizer ------------------------------------------------------------

class InvalidDims(GrtokError):
    """Tokenizer dimensions are inconsistent (e.g. embed dim not divisible
    by head count)."""


class BadMagic(GrtokError):
    """Binary file does not start with the expected magic bytes."""


class VersionUnsupported(GrtokError):
    """Binary file declares a format version this build cannot read."""


class SizeMismatch(GrtokError):
    """Binary payload size disagrees with the header."""


class MaskLengthMismatch(GrtokError):
    """A gate mask's length does not equal the patch count."""


class KeyMaskNotFull(GrtokError):
    """The key frame's gate mask must have every bit set."""


# --- scene merging --------------------------------------------------------

class EmptyTokenSet(GrtokError):
    """An operation requires a non-empty token set."""


class ZeroMeanEmbedding(GrtokError):
    """Cosine distance is undefined when a mean embedding is the zero
    vector."""


class TooFewTokens(GrtokError):
    """Codebook construction needs at least K tokens."""


class EmptySceneList(GrtokError):
    """Merging requires at least one scene."""


# --- synthetic benchmark --------------------------------------------------

class InvalidSpec(GrtokError):
    """Synthetic video spec violates its invariants."""


class NondeterministicOutput(GrtokError):
    """Token outputs differed across timing repetitions."""


class IoError(GrtokError):
    """Report or frame emission failed at the filesystem level."""
