"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
ResourceLimitError -> 3, NumericalError -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration input."""


class ResourceLimitError(RuntimeError):
    """A requested computation exceeds a configured resource cap."""


class NumericalError(RuntimeError):
    """A numerical routine failed or left its validity envelope."""
