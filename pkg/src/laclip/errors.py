"""Exception hierarchy shared across the package.

Everything raised on bad data derives from :class:`LaclipError` so the CLI
can map it to exit code 2 uniformly; usage mistakes stay plain
``ValueError``/``TypeError``/argparse errors (exit code 1). File-system
failures propagate as the builtin ``FileNotFoundError``/``OSError``.
"""


class LaclipError(Exception):
    """Base class for data and format errors raised by this package."""


class DimensionMismatchError(LaclipError):
    """Operands or stores disagree on vector dimension."""


class ZeroVectorError(LaclipError):
    """An all-zero vector reached a cosine or normalization step.

    Zero embeddings indicate an upstream encoder failure and are never
    silently mapped to similarity 0.
    """


class EmptyInputError(LaclipError):
    """An operation that needs at least one element received none."""


class NonFiniteInputError(LaclipError):
    """NaN or infinity encountered where finite values are required."""


class NonSquareMatrixError(LaclipError):
    """The contrastive losses require a square similarity matrix."""


class BatchTooSmallError(LaclipError):
    """Contrastive training needs at least two pairs per batch."""


class ManifestError(LaclipError):
    """Base for manifest parsing/validation errors; carries a line number."""

    def __init__(self, message, line_no=None):
        super().__init__(message)
        self.line_no = line_no


class MalformedLineError(ManifestError):
    """A manifest line is not a valid record object."""


class DuplicateIdError(ManifestError):
    """The same id occurs twice in a manifest or store."""

    def __init__(self, message, line_no=None, record_id=None):
        super().__init__(message, line_no)
        self.record_id = record_id


class CrossSourceCategoryError(ManifestError):
    """Category and source disagree (murals are dunhuang, the rest silk)."""

    def __init__(self, message, line_no=None, record_id=None):
        super().__init__(message, line_no)
        self.record_id = record_id


class StoreFormatError(LaclipError):
    """Base for embedding-store format violations."""


class BadMagicError(StoreFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(StoreFormatError):
    """Store version or element dtype not supported by this reader."""


class CorruptRecordError(StoreFormatError):
    """Record data is truncated or invalid; carries the byte offset."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class NormalizationViolationError(StoreFormatError):
    """A store flagged as normalized contains a non-unit vector."""

    def __init__(self, message, record_id=None):
        super().__init__(message)
        self.record_id = record_id


class EmptyPatchSetError(LaclipError):
    """Local alignment needs at least one patch."""


class MissingPatchesError(LaclipError):
    """An image record has no patches in strict local mode."""

    def __init__(self, message, record_id=None):
        super().__init__(message)
        self.record_id = record_id


class UnknownIdError(LaclipError):
    """A query or gold id is absent from the loaded corpus."""


class KExceedsCorpusError(LaclipError):
    """Requested more results than the corpus holds (strict mode)."""


class MissingGoldError(LaclipError):
    """A query has no gold mapping entry."""
