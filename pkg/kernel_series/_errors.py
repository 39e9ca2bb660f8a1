class KernelSeriesError(Exception):
    """Base class for every error raised by kernel_series."""


class FormatError(KernelSeriesError):
    """A file does not follow its declared binary layout."""


class DataError(KernelSeriesError):
    """Values are not admissible (NaN, Inf, overflow on narrowing)."""


class ArgumentError(KernelSeriesError):
    """An argument violates an operation's precondition."""


class ConfigError(KernelSeriesError):
    """A descriptor or harmonic configuration could not be understood."""


class IoError(KernelSeriesError, OSError):
    """Reading or writing an artifact failed."""
