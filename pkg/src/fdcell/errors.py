"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or file."""


class PlacementError(RuntimeError):
    """Random placement could not satisfy the layout constraints."""


class SolverError(RuntimeError):
    """Numerical solve failed in a way the caller cannot recover from."""
