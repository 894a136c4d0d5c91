"""Exception types raised across the package."""


class TLMRIError(Exception):
    """Base class for package errors."""


class ValidationError(TLMRIError, ValueError):
    """Invalid user-supplied parameters, shapes or files (CLI exit code 2)."""


class GeometryError(ValidationError):
    """Patch geometry incompatible with the image."""


class ParameterError(ValidationError):
    """Hyperparameter or generator argument out of range."""


class ConfigError(ValidationError):
    """Malformed, unknown or missing reconstruction config keys."""


class FormatError(ValidationError):
    """File header and payload disagree, or a file cannot be parsed."""


class SolverPreconditionError(TLMRIError):
    """The Fourier-diagonal image update does not apply; use the CG path."""
