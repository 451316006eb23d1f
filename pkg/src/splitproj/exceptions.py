"""Exception types shared across the package."""


class InfeasibleConstraintError(ValueError):
    """The equality system A v = b has no solution."""


class NumericalFailureError(RuntimeError):
    """An iteration produced a non-finite value or otherwise broke down."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


class MissingArtifactError(FileNotFoundError):
    """A referenced dataset, checkpoint, or report file does not exist."""
