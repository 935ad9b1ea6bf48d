"""Exception hierarchy shared by all lfcodec modules.

Every error raised on a contract violation derives from :class:`LfcError`
so the CLI can map each class to a stable one-line diagnostic prefix.
"""


class LfcError(Exception):
    """Base class for all lfcodec errors."""

    cli_tag = "error"


class ShapeError(LfcError, ValueError):
    """Tensor/image dimensions do not satisfy an operation's contract."""

    cli_tag = "shape"


class ConfigError(LfcError, ValueError):
    """A configuration object violates one of its invariants."""

    cli_tag = "config"


class DatasetError(LfcError):
    """A light-field directory is missing views or contains bad images."""

    cli_tag = "dataset"


class CodecError(LfcError):
    """Base class for bitstream serialization failures."""

    cli_tag = "codec"


class UnsupportedFormatError(CodecError):
    """Bad magic bytes or an unknown format version."""

    cli_tag = "format"


class CorruptedFileError(CodecError):
    """Payload truncated or internally inconsistent."""

    cli_tag = "corrupt"


class IncompatibleEncodingError(CodecError):
    """Encoded field fingerprint does not match the model configuration."""

    cli_tag = "fingerprint"


class CheckpointIOError(LfcError):
    """Writing a training checkpoint failed; message names the path."""

    cli_tag = "io"
