"""Exception types shared across the library.

Each failure class named by the module contracts maps to one exception here,
so callers can catch a specific condition without string matching.
"""


class VoxPriorError(Exception):
    """Base class for all library errors."""


class DimensionError(VoxPriorError, ValueError):
    """Tensor/grid shapes are inconsistent; message names the offending axis."""


class ConfigurationError(VoxPriorError, ValueError):
    """A configuration value is invalid (e.g. channels not divisible by groups)."""


class ParameterError(VoxPriorError, ValueError):
    """A user-supplied parameter is out of its documented range."""


class NumericError(VoxPriorError, ArithmeticError):
    """A non-finite value appeared where the contract requires finite numbers."""


class TrainingError(VoxPriorError, RuntimeError):
    """Training diverged or produced invalid gradients; message carries context."""


class CheckError(VoxPriorError, RuntimeError):
    """The gradient checker cannot run (e.g. the function is not deterministic)."""


class StateError(VoxPriorError, RuntimeError):
    """An operation was invoked on a model in the wrong state (e.g. untrained)."""


class DataError(VoxPriorError, ValueError):
    """Dataset contents violate an invariant (misaligned pairs, bad tokens)."""


class EmptySurfaceError(VoxPriorError, ValueError):
    """A TSDF grid has no sign change, so no surface can be extracted."""


class UsageError(VoxPriorError, ValueError):
    """Command-line usage error; message names the offending flag or key."""
