"""Typed errors shared across the package."""


class WorkbenchError(Exception):
    """Base class for every error raised by the workbench."""


class BackendMismatch(WorkbenchError, TypeError):
    pass


class VariableMismatch(WorkbenchError, ValueError):
    pass


class ExactOnly(WorkbenchError, TypeError):
    pass


class OutsideAnnulus(WorkbenchError, ValueError):
    pass


class SiteOutOfRange(WorkbenchError, IndexError):
    pass


class DimensionMismatch(WorkbenchError, ValueError):
    pass


class InvalidParameters(WorkbenchError, ValueError):
    pass


class InsufficientDepth(WorkbenchError, ValueError):
    pass


class NotScalar(WorkbenchError, ValueError):
    pass


class ConfigError(WorkbenchError, ValueError):
    pass


class TruncationError(WorkbenchError, ValueError):
    pass


class ConventionError(WorkbenchError, RuntimeError):
    """No candidate identification passed validation."""
