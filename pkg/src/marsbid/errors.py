"""Exception types shared across the package."""


class MarsbidError(Exception):
    """Base class for all package errors."""


class MarketDataError(MarsbidError):
    """Malformed, inconsistent, or unrepairable market data."""


class ConfigError(MarsbidError):
    """Invalid run configuration (unknown key, bad value, bad file)."""


class MissingPrerequisiteError(MarsbidError):
    """A command was invoked before its inputs exist (data, checkpoints)."""


class CheckpointError(MarsbidError):
    """Checkpoint file is corrupt, truncated, or incompatible."""


class DivergenceError(MarsbidError):
    """Training produced non-finite losses or parameters."""
