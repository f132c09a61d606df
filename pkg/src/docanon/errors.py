"""Exception types shared across the package."""


class AnonError(Exception):
    """Base class for all errors raised by docanon."""


class DegenerateTransformError(AnonError, ValueError):
    pass


class DegenerateInputError(AnonError, ValueError):
    """Point set cannot determine an affine model (too few or collinear)."""


class RasterError(AnonError, ValueError):
    pass


class SchemaError(AnonError, ValueError):
    """Annotation, sidecar, manifest or embedding file violates its schema."""


class ConfigError(AnonError, ValueError):
    pass


class AlignmentError(AnonError, RuntimeError):
    """Keypoint alignment could not produce a transform."""
