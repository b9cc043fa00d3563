"""Exception taxonomy. ConfigError/ParseError map to CLI exit 2, the rest to 3."""


class MdmeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MdmeError):
    """Invalid configuration, preset, or argument combination."""


class ParseError(ConfigError):
    """Malformed input file; message carries row/column context."""


class DimensionError(MdmeError):
    """Shape or index mismatch between runtime values."""


class NumericError(MdmeError):
    """Non-finite or degenerate numeric state."""
