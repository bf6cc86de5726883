"""Exception types, mapped to CLI exit codes in :mod:`sgwinv.cli`."""


class ConfigError(ValueError):
    """Invalid configuration, hyper-parameters, or input file contents."""


class MeshError(ConfigError):
    """Mesh file parse or validation failure."""


class NumericsError(RuntimeError):
    """A numerical routine failed (singular system, uncovered spectrum, ...)."""


class DataIOError(OSError):
    """Malformed or unreadable data file."""
