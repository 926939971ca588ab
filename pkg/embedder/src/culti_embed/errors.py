"""Exception hierarchy for the embedder pipeline."""


class EmbedderError(Exception):
    """Base class for all embedder failures."""


class ManifestFormatError(EmbedderError):
    """A manifest line is not usable (bad JSON or missing fields)."""

    def __init__(self, message: str, line_no=None):
        super().__init__(message)
        self.line_no = line_no


class MissingImageFileError(EmbedderError):
    """An image path from the manifest does not resolve to a file."""

    def __init__(self, message: str, record_id=None):
        super().__init__(message)
        self.record_id = record_id


class EncoderLoadError(EmbedderError):
    """The requested encoder cannot be constructed."""
