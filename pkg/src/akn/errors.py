"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor arguments have incompatible shapes; message names the offending dimension."""


class ConfigError(ValueError):
    """Invalid configuration key, value, or combination."""


class FormatError(ValueError):
    """A binary file (checkpoint or clip) is malformed."""


class GraphError(ValueError):
    """An autodiff graph request is invalid (e.g. backward from a non-scalar)."""
