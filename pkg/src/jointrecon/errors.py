"""Exception types raised across the package."""


class ReconError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(ReconError, ValueError):
    pass


class ShapeTooSmall(ReconError, ValueError):
    pass


class FieldMismatch(ReconError, TypeError):
    """Real input given where complex is required, or vice versa."""


class DomainError(ReconError, ValueError):
    pass


class ParamError(ReconError, ValueError):
    pass


class ScheduleError(ReconError, ValueError):
    pass


class ConfigError(ReconError, ValueError):
    """Invalid run or dataset configuration; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class BacktrackExhausted(ReconError, RuntimeError):
    pass


class MissingArtifact(ReconError, FileNotFoundError):
    pass
