"""Exception types shared across the package."""


class GraphxError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GraphxError):
    """Operands or arguments have incompatible shapes; the message names both."""


class ValidationError(GraphxError):
    """Input data violates a structural invariant (values, labels, file contents)."""


class ConfigError(GraphxError):
    """A configuration value is missing, unknown, or out of its allowed range."""


class DegenerateRowError(GraphxError):
    """A masked row softmax was asked to normalise a row with no unmasked entries."""


class DivergenceError(GraphxError):
    """Training produced a non-finite loss."""
