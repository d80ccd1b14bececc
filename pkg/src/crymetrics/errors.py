"""Exception types shared across the package."""


class CrymetricsError(Exception):
    """Base class for package errors."""


class WavFormatError(CrymetricsError):
    """The file is not a well-formed RIFF/WAVE container."""


class UnsupportedWavError(WavFormatError):
    """Well-formed WAV, but an encoding this reader does not handle."""


class TextGridParseError(CrymetricsError):
    """Malformed TextGrid input.

    ``line`` is the 1-based line number where parsing failed, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateSignalError(CrymetricsError):
    """A signal is all-zero (or constant) where variation is required."""


class InsufficientCyclesError(CrymetricsError):
    """Fewer than three usable glottal cycles in an analysis window."""


class InsufficientSubjectsError(CrymetricsError):
    """Fewer subjects than the statistic requires."""


class DegenerateDataError(CrymetricsError):
    """Zero-variance or otherwise degenerate data in a statistic."""
