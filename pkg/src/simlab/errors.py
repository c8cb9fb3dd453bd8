"""Exception taxonomy shared across the package."""


class SimlabError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(SimlabError, ValueError):
    """A configuration value or argument is outside its legal range."""


class BoundaryError(SimlabError, ValueError):
    """A probability input sits on the boundary of (0, 1) where a target
    allocation formula is undefined; callers are expected to clamp first."""


class NotReadyError(SimlabError, RuntimeError):
    """A procedure has too little history (or a singular matrix) to emit a
    model-based probability; callers fall back to complete randomization."""


class NotEstimableError(SimlabError, RuntimeError):
    """An estimator's preconditions are not met (insufficient rows, missing
    outcome class, empty stratum)."""


class UnsupportedProcedureError(SimlabError, TypeError):
    """The requested analysis does not apply to this procedure kind."""


class ScenarioError(SimlabError, ValueError):
    """A scenario document is malformed or violates its schema."""
