"""Polarization dynamics of a shallow NV center coupled to nuclear spin baths.

Unit conventions used throughout the package:

* lengths in nm
* times in us
* angular frequencies and rates in rad/us (never Hz; conversions live in IO)
* magnetic fields in Gauss

The NV sits at the origin with its quantization axis along +z; the sample
occupies z > 0.
"""

from .constants import PhysicalConstants
from .errors import ConfigError, NumericalError, ResourceLimitError

__version__ = "0.1.0"

__all__ = [
    "PhysicalConstants",
    "ConfigError",
    "ResourceLimitError",
    "NumericalError",
    "__version__",
]
