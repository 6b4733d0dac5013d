"""Exception types shared across the package."""


class SamkitError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SamkitError, ValueError):
    """Invalid configuration value, file, or combination of options."""


class NumericInputError(SamkitError, ValueError):
    """An input vector contained NaN/Inf or an iterate left the finite range."""


class StateError(SamkitError, RuntimeError):
    """An optimizer state violated its cache contract (detected in audit mode)."""


class PipelineError(SamkitError, RuntimeError):
    """A worker failed or a synchronization barrier broke during a parallel run."""
