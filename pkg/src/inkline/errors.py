"""Exception types shared across the package."""


class InklineError(Exception):
    """Base class for package errors."""


class DimensionError(InklineError):
    """A tensor axis or shape violates an operation's contract."""


class ConfigurationError(InklineError):
    """A configuration value is invalid (e.g. head count not dividing width)."""


class ValidationError(InklineError):
    """Input data violates a domain invariant (e.g. coordinates outside [0,1])."""


class CapacityError(InklineError):
    """A fixed capacity was exceeded (e.g. more than 28 strokes per glyph)."""


class ForgeError(InklineError):
    """Synthetic corpus generation could not satisfy its constraints."""
