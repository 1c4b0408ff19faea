"""Exception hierarchy shared by the IO and processing stages."""


class TreeDecayError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(TreeDecayError, ValueError):
    """Malformed or unsupported input file."""


class LasSignatureError(FormatError):
    pass


class LasVersionError(FormatError):
    pass


class LasTruncatedError(FormatError):
    pass


class LasRangeError(FormatError):
    """A coordinate does not fit the 32-bit scaled integer range."""


class TextCloudError(FormatError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RasterFormatError(FormatError):
    pass


class EmptyCloudError(TreeDecayError, ValueError):
    pass


class StageError(TreeDecayError):
    """Failure inside a pipeline stage; ``stage`` names the failing step."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class InputError(TreeDecayError):
    """An input of a stage could not be read; ``stage`` names the consumer."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
