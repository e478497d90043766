"""Exception types shared across the toolkit."""


class OctaudioError(Exception):
    """Base class for all toolkit errors."""


class ParseError(OctaudioError):
    """Input file violates its container format."""


class UnsupportedFormat(OctaudioError):
    """Input file is well-formed but uses an unsupported codec/bit-depth."""


class IoError(OctaudioError):
    """Reading or writing a file failed at the OS level."""


class ShapeError(OctaudioError):
    """Array dimensions violate an operation's contract."""


class ConfigError(OctaudioError):
    """Configuration value is missing, malformed, or out of range."""


class DivergenceError(OctaudioError):
    """Training produced a non-finite loss."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")
